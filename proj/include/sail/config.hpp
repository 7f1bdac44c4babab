#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sail/io.hpp"
#include "sail/reference.hpp"

namespace sail {

inline const char* const tool_version = "0.1.0";

/// The subcommands, in CLI order.
const std::vector<std::string>& task_names();

/// q, f or p0: a named closed-form family, or a CSV file with a `value`
/// column in node order.
struct FieldSpec {
    std::string family = "zero";
    double amplitude = 1.0;
    std::uint64_t seed = 1;
    std::string path;
};

struct ProfileSpec {
    std::string family = "affine";  ///< affine: 1 + slope (t - T/2); constant; zero
    double value = 1.0;
    double slope = 1.0;
};

/// A fully validated experiment. `echo` is the merged JSON with every
/// default filled in; its hash identifies the run.
struct ExperimentConfig {
    std::string task;
    int nx = 33;
    int ny = 33;
    double lx = 1.0;
    double ly = 1.0;
    Point x0{-1.0, 0.0};
    double sigma = 0.5;
    double T = 4.6;
    double dt = 1.0 / 256.0;
    RunMode mode = RunMode::forward_only;
    double kappa = 1.0;
    std::size_t stride = 8;
    double growth_guard = 1e6;
    FieldSpec potential;
    FieldSpec f{"reference", 1.0, 1, {}};
    ProfileSpec R;
    std::uint64_t seed = 1;
    std::string output;
    Json options;  ///< task block with defaults
    Json echo;
    std::filesystem::path base_dir;  ///< relative paths resolve here

    std::string hash() const;
    DomainGeometry geometry() const;
    ObservationWindow window() const;
    std::filesystem::path resolve(const std::string& path) const;
};

/// Full default tree for one task.
Json default_config(const std::string& task);

/// Validates `user` against the defaults of `task`: unknown keys and type
/// mismatches are rejected with the offending field path, preconditions
/// that need no computation are checked.
ExperimentConfig parse_config(const Json& user, const std::string& task, const std::filesystem::path& base_dir = {});

/// Parse errors report line and column.
ExperimentConfig load_config(const std::filesystem::path& path, const std::string& task);

FieldSpec field_spec_from(const Json& block);

Vector build_field(const FieldSpec& spec, const ExperimentConfig& config, const DomainGeometry& geometry);
/// Closed-form families only (for grid-independent probes).
SpaceFunction field_function(const FieldSpec& spec);
std::shared_ptr<const SourceProfile> build_profile(const ProfileSpec& spec, const DomainGeometry& geometry, double T);

}  // namespace sail
