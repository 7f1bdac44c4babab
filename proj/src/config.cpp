#include "sail/config.hpp"

#include <algorithm>
#include <cmath>

#include "sail/random.hpp"

namespace sail {

namespace {

Error field_error(const std::string& field, const std::string& message) {
    return validation_error("invalid-config", field + ": " + message);
}

Json task_defaults(const std::string& task) {
    if (task == "verify-geometry") return {{"refine", 4}};
    if (task == "carleman-check") {
        return {{"kappa", 0.0},   {"tau_grid", {0.5, 1.0, 2.0, 4.0, 8.0, 16.0}},
                {"epsilon", 0.1}, {"rho", 2.0},
                {"c1", 1.0},      {"c_t", 1.0}};
    }
    if (task == "observability") return {{"samples", 50}, {"refine", true}};
    if (task == "simulate") return {{"noise_level", 0.0}};
    if (task == "invert") {
        return {{"method", "tikhonov_svd"}, {"alpha", 1e-10},         {"noise_level", 0.0},
                {"noise_sigma", 0.0},       {"observation", ""},      {"discrepancy_factor", 1.1},
                {"sweep", true},            {"max_iterations", 2000}, {"rank_threshold", 1e-10},
                {"cache_dir", ""}};
    }
    if (task == "stability-probe") {
        return {{"smooth", 20}, {"bumps", 10}, {"refine", true}, {"psi_y", true}, {"basis_nodes", 7}, {"injectivity", false}};
    }
    if (task == "recover-q") {
        return {{"iterations", 8},
                {"alpha", 1e-6},
                {"tolerance", 1e-8},
                {"p0", {{"family", "zero"}, {"amplitude", 1.0}, {"seed", 1}, {"path", ""}}},
                {"s0", 0.5},
                {"s1", 0.5},
                {"cache_dir", ""}};
    }
    if (task == "domain-check") return {{"state", "compatible"}, {"order", 2}, {"time", 1.0}, {"tolerance", 0.0}};
    throw validation_error("unknown-task", "unknown subcommand " + task);
}

Json field_default(const std::string& family) {
    return {{"family", family}, {"amplitude", 1.0}, {"seed", 1}, {"path", ""}};
}

std::string type_name(const Json& j) {
    if (j.is_object()) return "object";
    if (j.is_array()) return "array";
    if (j.is_string()) return "string";
    if (j.is_boolean()) return "boolean";
    if (j.is_number_integer()) return "integer";
    if (j.is_number()) return "number";
    return "null";
}

Json merge(const Json& defaults, const Json& user, const std::string& path) {
    if (!user.is_object()) throw field_error(path.empty() ? "config" : path, "expected an object");
    Json out = defaults;
    for (auto it = user.begin(); it != user.end(); ++it) {
        const std::string key = it.key();
        const std::string field = path.empty() ? key : path + "." + key;
        if (key == "_doc") continue;
        if (!defaults.contains(key)) throw field_error(field, "unknown key");
        const Json& d = defaults.at(key);
        const Json& v = it.value();
        if (d.is_object()) {
            out[key] = merge(d, v, field);
        } else if (d.is_array()) {
            if (!v.is_array() || v.empty() ||
                !std::all_of(v.begin(), v.end(), [](const Json& x) { return x.is_number(); })) {
                throw field_error(field, "expected a non-empty array of numbers");
            }
            out[key] = v;
        } else if (d.is_boolean()) {
            if (!v.is_boolean()) throw field_error(field, "expected boolean, got " + type_name(v));
            out[key] = v;
        } else if (d.is_string()) {
            if (!v.is_string()) throw field_error(field, "expected string, got " + type_name(v));
            out[key] = v;
        } else if (d.is_number_integer()) {
            if (!v.is_number_integer()) throw field_error(field, "expected integer, got " + type_name(v));
            out[key] = v;
        } else {
            if (!v.is_number()) throw field_error(field, "expected number, got " + type_name(v));
            out[key] = v.get<double>();
        }
    }
    return out;
}

}  // namespace

FieldSpec field_spec_from(const Json& j) {
    FieldSpec s;
    s.family = j.at("family").get<std::string>();
    s.amplitude = j.at("amplitude").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.path = j.at("path").get<std::string>();
    return s;
}

namespace {

void check_field_spec(const FieldSpec& s, const std::string& field, const ExperimentConfig& c) {
    static const std::vector<std::string> families{"zero", "constant", "linear", "bump", "reference", "smooth", "file"};
    if (std::find(families.begin(), families.end(), s.family) == families.end()) {
        throw field_error(field + ".family", "unknown family " + s.family +
                                                 " (zero, constant, linear, bump, reference, smooth, file)");
    }
    if (!std::isfinite(s.amplitude)) throw field_error(field + ".amplitude", "must be finite");
    if (s.family == "file") {
        if (s.path.empty()) throw field_error(field + ".path", "required for family file");
        if (!std::filesystem::exists(c.resolve(s.path))) throw field_error(field + ".path", "no such file " + s.path);
    }
}

template <class T>
T positive(const Json& j, const std::string& key, const std::string& field) {
    const T v = j.at(key).get<T>();
    if (!(v > 0)) throw field_error(field + "." + key, "must be positive");
    return v;
}

void validate_task(const ExperimentConfig& c, const AssumptionReport& assumptions) {
    const Json& o = c.options;
    const std::string& t = c.task;
    const std::size_t unknowns = static_cast<std::size_t>(c.nx - 2) * static_cast<std::size_t>(c.ny - 2);
    if (t == "verify-geometry") {
        positive<int>(o, "refine", "task");
    } else if (t == "carleman-check") {
        if (o.at("kappa").get<double>() < 0.0) throw field_error("task.kappa", "must be non-negative");
        for (const auto& x : o.at("tau_grid"))
            if (!(x.get<double>() >= 0.0)) throw field_error("task.tau_grid", "entries must be non-negative");
        positive<double>(o, "epsilon", "task");
    } else if (t == "observability") {
        positive<int>(o, "samples", "task");
        if (c.potential.family == "file") {
            throw field_error("potential.family", "observability resamples q on a refined grid; use a closed form");
        }
    } else if (t == "simulate") {
        if (o.at("noise_level").get<double>() < 0.0) throw field_error("task.noise_level", "must be non-negative");
    } else if (t == "invert") {
        inversion_method_from_string(o.at("method").get<std::string>());
        if (o.at("alpha").get<double>() < 0.0) throw field_error("task.alpha", "must be non-negative");
        if (o.at("noise_level").get<double>() < 0.0) throw field_error("task.noise_level", "must be non-negative");
        if (o.at("noise_sigma").get<double>() < 0.0) throw field_error("task.noise_sigma", "must be non-negative");
        positive<int>(o, "max_iterations", "task");
        positive<double>(o, "discrepancy_factor", "task");
        const std::string obs = o.at("observation").get<std::string>();
        if (!obs.empty() && !std::filesystem::exists(c.resolve(obs))) {
            throw field_error("task.observation", "no such file " + obs);
        }
        if (unknowns > max_map_unknowns) {
            throw validation_error("scale-too-large", "geometry: " + std::to_string(unknowns) +
                                                          " interior unknowns exceed " +
                                                          std::to_string(max_map_unknowns));
        }
    } else if (t == "stability-probe") {
        const int n = positive<int>(o, "smooth", "task") + o.at("bumps").get<int>();
        if (o.at("bumps").get<int>() < 0 || n < 30) {
            throw field_error("task", "the ensemble needs at least 30 samples (smooth + bumps)");
        }
        if (o.at("basis_nodes").get<int>() < 5) throw field_error("task.basis_nodes", "need at least 5 (20 modes)");
        if (o.at("refine").get<bool>() && c.potential.family == "file") {
            throw field_error("potential.family", "refinement resamples q; use a closed form");
        }
        if (unknowns > max_map_unknowns) {
            throw validation_error("scale-too-large", "geometry: " + std::to_string(unknowns) +
                                                          " interior unknowns exceed " +
                                                          std::to_string(max_map_unknowns));
        }
    } else if (t == "recover-q") {
        positive<int>(o, "iterations", "task");
        if (o.at("alpha").get<double>() < 0.0) throw field_error("task.alpha", "must be non-negative");
        check_field_spec(field_spec_from(o.at("p0")), "task.p0", c);
        if (c.mode != RunMode::forward_only) throw field_error("time.mode", "recover-q runs forward_only");
        if (unknowns > max_map_unknowns) {
            throw validation_error("scale-too-large", "geometry: " + std::to_string(unknowns) +
                                                          " interior unknowns exceed " +
                                                          std::to_string(max_map_unknowns));
        }
    } else if (t == "domain-check") {
        const std::string s = o.at("state").get<std::string>();
        if (s != "compatible" && s != "initial" && s != "linear-trajectory") {
            throw field_error("task.state", "must be compatible, initial or linear-trajectory");
        }
        const int order = o.at("order").get<int>();
        if (order < 1 || order > 3) throw field_error("task.order", "must be 1, 2 or 3");
        if (std::abs(o.at("time").get<double>()) > 0.5 * c.T) throw field_error("task.time", "must lie in [-T/2, T/2]");
    }
    (void)assumptions;
}

}  // namespace

const std::vector<std::string>& task_names() {
    static const std::vector<std::string> names{"verify-geometry", "carleman-check", "observability",   "simulate",
                                                "invert",          "stability-probe", "recover-q", "domain-check"};
    return names;
}

Json default_config(const std::string& task) {
    Json j;
    // one simulation per unknown: the map-based tasks default to a coarser grid
    const bool map_task = task == "invert" || task == "stability-probe" || task == "recover-q";
    const int n = map_task ? 17 : 33;
    j["geometry"] = {{"nx", n}, {"ny", n}, {"lx", 1.0}, {"ly", 1.0}};
    j["weight"] = {{"x0", {-1.0, 0.0}}, {"sigma", 0.5}};
    j["time"] = {{"T", 4.6},        {"dt", 1.0 / 256.0}, {"mode", "forward_only"},
                 {"kappa", 1.0},    {"stride", 8},       {"growth_guard", 1e6}};
    j["potential"] = field_default(task == "recover-q" ? "bump" : "zero");
    if (task == "recover-q") j["potential"]["amplitude"] = 0.1;
    j["source"] = {{"f", field_default("reference")}, {"R", {{"family", "affine"}, {"value", 1.0}, {"slope", 1.0}}}};
    j["task"] = task_defaults(task);
    j["seed"] = 1;
    j["output"] = "runs/" + task;
    return j;
}

ExperimentConfig parse_config(const Json& user, const std::string& task, const std::filesystem::path& base_dir) {
    ExperimentConfig c;
    c.task = task;
    c.base_dir = base_dir;
    c.echo = merge(default_config(task), user, "");
    const Json& e = c.echo;
    c.nx = e["geometry"]["nx"].get<int>();
    c.ny = e["geometry"]["ny"].get<int>();
    c.lx = e["geometry"]["lx"].get<double>();
    c.ly = e["geometry"]["ly"].get<double>();
    const Json& x0 = e["weight"]["x0"];
    if (x0.size() != 2) throw field_error("weight.x0", "expected two coordinates");
    c.x0 = {x0[0].get<double>(), x0[1].get<double>()};
    c.sigma = e["weight"]["sigma"].get<double>();
    c.T = e["time"]["T"].get<double>();
    c.dt = e["time"]["dt"].get<double>();
    const std::string mode = e["time"]["mode"].get<std::string>();
    if (mode == "forward_only") {
        c.mode = RunMode::forward_only;
    } else if (mode == "two_sided") {
        c.mode = RunMode::two_sided;
    } else {
        throw field_error("time.mode", "must be forward_only or two_sided");
    }
    c.kappa = e["time"]["kappa"].get<double>();
    const int stride = e["time"]["stride"].get<int>();
    if (stride < 1) throw field_error("time.stride", "must be at least 1");
    c.stride = static_cast<std::size_t>(stride);
    c.growth_guard = e["time"]["growth_guard"].get<double>();
    c.potential = field_spec_from(e["potential"]);
    c.f = field_spec_from(e["source"]["f"]);
    c.R.family = e["source"]["R"]["family"].get<std::string>();
    c.R.value = e["source"]["R"]["value"].get<double>();
    c.R.slope = e["source"]["R"]["slope"].get<double>();
    if (e["seed"].get<long long>() < 0) throw field_error("seed", "must be non-negative");
    c.seed = e["seed"].get<std::uint64_t>();
    c.output = e["output"].get<std::string>();
    c.options = e["task"];

    if (c.nx < 5 || c.ny < 5) throw field_error("geometry", "need at least 5 nodes per side");
    if (!(c.lx > 0.0) || !(c.ly > 0.0)) throw field_error("geometry", "extents must be positive");
    if (!(c.dt > 0.0)) throw field_error("time.dt", "must be positive");
    if (!(c.dt < 0.5 * c.T)) throw field_error("time.dt", "must be smaller than T/2");
    if (c.kappa < 0.0) throw field_error("time.kappa", "must be non-negative");
    if (!(c.growth_guard > 1.0)) throw field_error("time.growth_guard", "must exceed 1");
    if (c.R.family != "affine" && c.R.family != "constant" && c.R.family != "zero") {
        throw field_error("source.R.family", "must be affine, constant or zero");
    }
    check_field_spec(c.potential, "potential", c);
    check_field_spec(c.f, "source.f", c);

    const DomainGeometry g = c.geometry();
    ConvexWeight weight;
    try {
        weight = eval_weight(g, c.x0);
    } catch (const Error& err) {
        throw field_error("weight.x0", err.what());
    }
    const AssumptionReport a = verify_assumptions(g, weight);
    const double tmin = min_observation_time(a);
    if (!(c.T > tmin)) {
        throw field_error("time.T", "T = " + format_double(c.T) + " must exceed the observation time threshold T_min = " +
                                        format_double(tmin));
    }
    if (!(c.sigma > 0.0) || !(c.sigma < a.min_d)) {
        throw field_error("weight.sigma", "must lie in (0, min d) = (0, " + format_double(a.min_d) + ")");
    }
    validate_task(c, a);
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, const std::string& task) {
    const std::string text = read_text(path);
    Json user;
    try {
        user = Json::parse(text);
    } catch (const Json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
            if (text[k] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw validation_error("parse-error", path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                                                  ": " + e.what());
    }
    return parse_config(user, task, path.parent_path());
}

std::string ExperimentConfig::hash() const { return sha256_hex(task + "\n" + echo.dump()); }

DomainGeometry ExperimentConfig::geometry() const { return build_reference_domain(nx, ny, lx, ly); }

ObservationWindow ExperimentConfig::window() const {
    ObservationWindow w;
    w.T = T;
    w.dt = dt;
    w.mode = mode;
    w.kappa = kappa;
    w.stride = stride;
    return w;
}

std::filesystem::path ExperimentConfig::resolve(const std::string& path) const {
    const std::filesystem::path p(path);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

SpaceFunction field_function(const FieldSpec& s) {
    const double a = s.amplitude;
    if (s.family == "zero") return [](double, double) { return 0.0; };
    if (s.family == "constant") return [a](double, double) { return a; };
    if (s.family == "linear") return [a](double x, double) { return a * x; };
    if (s.family == "bump") {
        return [a](double x, double y) {
            const double d = ((x - 0.45) * (x - 0.45) + (y - 0.55) * (y - 0.55)) / 0.1225;
            return d < 1.0 ? a * (1.0 - d) * (1.0 - d) : 0.0;
        };
    }
    if (s.family == "reference") {
        return [a](double x, double y) {
            return a * std::exp(-((x - 0.55) * (x - 0.55) + (y - 0.45) * (y - 0.45)) / 0.04);
        };
    }
    throw validation_error("not-closed-form", "family " + s.family + " has no closed form");
}

Vector build_field(const FieldSpec& s, const ExperimentConfig& c, const DomainGeometry& g) {
    const Eigen::Index n = static_cast<Eigen::Index>(g.node_count());
    if (s.family == "file") {
        const CsvTable t = read_csv(c.resolve(s.path));
        const auto col = std::find(t.header.begin(), t.header.end(), "value");
        if (col == t.header.end()) throw validation_error("bad-field-file", s.path + " has no value column");
        if (static_cast<Eigen::Index>(t.rows.size()) != n) {
            throw validation_error("bad-field-file", s.path + " has " + std::to_string(t.rows.size()) +
                                                         " rows, the grid has " + std::to_string(n) + " nodes");
        }
        Vector v(n);
        const auto k = static_cast<std::size_t>(col - t.header.begin());
        for (Eigen::Index i = 0; i < n; ++i) v[i] = t.rows[static_cast<std::size_t>(i)][k];
        return v;
    }
    if (s.family == "smooth") {
        SplitMix64 rng(s.seed);
        const SmoothField field = SmoothField::random(rng, 4, g.lx(), g.ly());
        return s.amplitude * FieldOmega::sample(g, field).values;
    }
    return FieldOmega::sample(g, field_function(s)).values;
}

std::shared_ptr<const SourceProfile> build_profile(const ProfileSpec& s, const DomainGeometry& g, double T) {
    const Vector ones = Vector::Ones(static_cast<Eigen::Index>(g.node_count()));
    if (s.family == "zero") return std::make_shared<SeparableProfile>(ones, TimeProfile::constant(0.0));
    if (s.family == "constant") return std::make_shared<SeparableProfile>(ones, TimeProfile::constant(s.value));
    return std::make_shared<SeparableProfile>(ones, TimeProfile::polynomial({s.value, s.slope}, 0.5 * T));
}

}  // namespace sail
