#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sail/config.hpp"

namespace sail {

/// One asserted invariant. relation is "<=", ">=", "==" or "in".
struct Check {
    std::string name;
    double value = 0.0;
    double limit = 0.0;
    std::string relation = "<=";
    bool pass = false;
};

Check check_le(std::string name, double value, double limit);
Check check_ge(std::string name, double value, double limit);
Check check_true(std::string name, bool ok);

struct NamedTable {
    std::string name;  ///< file stem suffix
    CsvTable table;
};

struct NamedField {
    std::string name;
    Json header;
    Matrix data;
};

struct Report {
    std::string name;
    Json body = Json::object();
    std::vector<NamedTable> tables;
    std::vector<NamedField> fields;
    std::vector<Check> checks;

    bool pass() const;
};

struct FileEntry {
    std::string path;  ///< relative to the run directory
    std::string sha256;
};

/// <name>.json per report, <name>_<table>.csv per table, <name>_<field>.saif
/// per field, and summary.json. Returns the written files in order.
std::vector<FileEntry> emit_reports(const std::vector<Report>& reports, const std::filesystem::path& dir);

/// Refuses a non-empty directory unless `force`, in which case it is
/// cleared first.
void prepare_output(const std::filesystem::path& dir, bool force);

struct RunManifest {
    std::string config_hash;
    std::string version = tool_version;
    std::string started;
    std::string finished;
    std::vector<FileEntry> inputs;
    std::vector<FileEntry> outputs;
    bool pass = false;

    Json to_json() const;
};

/// Task body only: no files are touched. A solver failure that still has
/// something to report (recover-q divergence) comes back in `failure`.
struct TaskOutcome {
    std::vector<Report> reports;
    std::optional<Error> failure;
};

TaskOutcome run_task(const ExperimentConfig& config);

/// Runs the task, writes config.json, the reports and manifest.json into
/// `out`. manifest.json is the only file carrying timestamps. Rethrows a
/// task failure after the files are written.
RunManifest run(const ExperimentConfig& config, const std::filesystem::path& out, bool force,
                const std::vector<std::filesystem::path>& inputs = {});

/// Trace CSV: t,node,u,ut,utt,uttt,bilap_utt, one row per sample and beam node.
CsvTable traces_table(const TraceSeries& traces);
/// Reads u back and redoes the differencing chain.
TraceSeries traces_from_table(const CsvTable& table, const ClampedBiharmonic& biharmonic);

}  // namespace sail
