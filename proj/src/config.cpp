#include "ratchet/config.hpp"

#include "ratchet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

namespace ratchet {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
    if (!obj.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : obj.items())
        if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + " has the wrong type");
    }
}

} // namespace

void RunConfig::validate() const {
    problem.validate();
    build_model(model, problem);
    if (problem.state_dim != 1 || problem.noise_dim != 1)
        throw ConfigError("the grid pipeline supports a scalar state and noise only");
    (void)make_grid(problem, grid.nt, grid.nx, grid.nc, grid.x_radius);
    scheme.validate();

    if (oracle.n_paths < 1) throw ConfigError("oracle.n_paths must be at least 1");
    if (!(oracle.dt_sim > 0.0) || !std::isfinite(oracle.dt_sim))
        throw ConfigError("oracle.dt_sim must be positive");
    if (oracle.intervals < 1) throw ConfigError("oracle.intervals must be at least 1");
    if (!(oracle.t0 >= 0.0 && oracle.t0 < problem.horizon))
        throw ConfigError("oracle.t0 must lie in [0, T)");
    if (!std::isfinite(oracle.x0)) throw ConfigError("oracle.x0 must be finite");
    const double steps = (problem.horizon - oracle.t0) / oracle.intervals / oracle.dt_sim;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps) || std::round(steps) < 1.0)
        throw ConfigError("oracle.dt_sim must divide the control interval length (T - t0) / intervals");
    for (std::size_t q = 0; q < oracle.levels.size(); ++q) {
        const double l = oracle.levels[q];
        if (!(l > problem.c_lower && l <= problem.c_upper))
            throw ConfigError("oracle.levels must lie in (c_lower, c_upper]");
        if (q > 0 && !(oracle.levels[q - 1] < l))
            throw ConfigError("oracle.levels must be strictly ascending");
    }
    if (oracle.c_start_set && !(oracle.c_start > problem.c_lower && oracle.c_start <= problem.c_upper))
        throw ConfigError("oracle.c_start must lie in (c_lower, c_upper]");
    if (oracle.t_mid != 0.0 && !(oracle.t_mid > oracle.t0 && oracle.t_mid < problem.horizon))
        throw ConfigError("oracle.t_mid must lie in (t0, T)");
    if (oracle.table_nx < 2 || !(oracle.table_x_min < oracle.table_x_max))
        throw ConfigError("oracle value table needs table_nx >= 2 and table_x_min < table_x_max");
    if (!(oracle.budget >= 1.0)) throw ConfigError("oracle.budget must be at least 1");

    if (lab.gammas.size() < 3) throw ConfigError("lab.gammas needs at least 3 values");
    for (double g : lab.gammas)
        if (!(g > 0.0 && g <= 1.0)) throw ConfigError("lab.gammas must lie in (0, 1]");
    if (!(lab.residual_constant > 0.0)) throw ConfigError("lab.residual_constant must be positive");
    if (lab.regularity_samples < 2) throw ConfigError("lab.regularity_samples must be >= 2");

    if (converge.refinements < 3) throw ConfigError("converge.refinements must be at least 3");
    if (!(converge.order_min < converge.order_max))
        throw ConfigError("converge.order_min must be below converge.order_max");

    if (output_dir.empty()) throw ConfigError("output.directory must not be empty");
    for (const auto& f : formats)
        if (f != "csv" && f != "json") throw ConfigError("output.formats accepts 'csv' and 'json'");
    if (threads < 1) throw ConfigError("threads must be at least 1");
}

RunConfig parse_config(const json& input) {
    const json& doc = input.contains("config") ? input.at("config") : input;
    reject_unknown(doc,
                   {"schema_version", "model", "problem", "grid", "scheme", "oracle", "lab",
                    "converge", "output", "run"},
                   "config");
    if (!doc.contains("schema_version")) throw ConfigError("config.schema_version is required");
    int version = 0;
    read(doc, "schema_version", version, "config");
    if (version != kConfigSchemaVersion)
        throw ConfigError("unsupported schema_version " + std::to_string(version));

    RunConfig cfg;
    if (!doc.contains("model")) throw ConfigError("config.model is required");
    const json& m = doc.at("model");
    reject_unknown(m, {"name", "params"}, "model");
    read(m, "name", cfg.model.name, "model");
    if (m.contains("params")) {
        reject_unknown(m.at("params"), {"mu0", "sigma0", "weight"}, "model.params");
        for (const auto& [key, value] : m.at("params").items()) {
            if (!value.is_number()) throw ConfigError("model.params." + key + " must be a number");
            cfg.model.params[key] = value.get<double>();
        }
    }
    if (doc.contains("problem")) {
        const json& p = doc.at("problem");
        reject_unknown(p, {"T", "c_lower", "c_upper"}, "problem");
        read(p, "T", cfg.problem.horizon, "problem");
        read(p, "c_lower", cfg.problem.c_lower, "problem");
        read(p, "c_upper", cfg.problem.c_upper, "problem");
    }
    if (doc.contains("grid")) {
        const json& g = doc.at("grid");
        reject_unknown(g, {"nt", "nx", "nc", "x_radius"}, "grid");
        read(g, "nt", cfg.grid.nt, "grid");
        read(g, "nx", cfg.grid.nx, "grid");
        read(g, "nc", cfg.grid.nc, "grid");
        read(g, "x_radius", cfg.grid.x_radius, "grid");
    }
    if (doc.contains("scheme")) {
        const json& s = doc.at("scheme");
        reject_unknown(s, {"theta", "jump_tol", "max_linear_iters", "linear_tol"}, "scheme");
        read(s, "theta", cfg.scheme.theta, "scheme");
        read(s, "jump_tol", cfg.scheme.jump_tol, "scheme");
        read(s, "max_linear_iters", cfg.scheme.max_linear_iters, "scheme");
        read(s, "linear_tol", cfg.scheme.linear_tol, "scheme");
    }
    if (doc.contains("oracle")) {
        const json& o = doc.at("oracle");
        reject_unknown(o,
                       {"n_paths", "dt_sim", "seed", "levels", "intervals", "t0", "x0", "c_start",
                        "t_mid", "table_x_min", "table_x_max", "table_nx", "table_paths", "budget"},
                       "oracle");
        read(o, "n_paths", cfg.oracle.n_paths, "oracle");
        read(o, "dt_sim", cfg.oracle.dt_sim, "oracle");
        read(o, "seed", cfg.oracle.seed, "oracle");
        read(o, "levels", cfg.oracle.levels, "oracle");
        read(o, "intervals", cfg.oracle.intervals, "oracle");
        read(o, "t0", cfg.oracle.t0, "oracle");
        read(o, "x0", cfg.oracle.x0, "oracle");
        if (o.contains("c_start")) {
            read(o, "c_start", cfg.oracle.c_start, "oracle");
            cfg.oracle.c_start_set = true;
        }
        read(o, "t_mid", cfg.oracle.t_mid, "oracle");
        read(o, "table_x_min", cfg.oracle.table_x_min, "oracle");
        read(o, "table_x_max", cfg.oracle.table_x_max, "oracle");
        read(o, "table_nx", cfg.oracle.table_nx, "oracle");
        read(o, "table_paths", cfg.oracle.table_paths, "oracle");
        read(o, "budget", cfg.oracle.budget, "oracle");
    }
    if (doc.contains("lab")) {
        const json& l = doc.at("lab");
        reject_unknown(l,
                       {"gammas", "value_csv", "residual_constant", "sandwich_tolerance",
                        "semiconvexity_tolerance", "monotone_tolerance", "estimate_ceiling",
                        "regularity_samples"},
                       "lab");
        read(l, "gammas", cfg.lab.gammas, "lab");
        read(l, "value_csv", cfg.lab.value_csv, "lab");
        read(l, "residual_constant", cfg.lab.residual_constant, "lab");
        read(l, "sandwich_tolerance", cfg.lab.sandwich_tolerance, "lab");
        read(l, "semiconvexity_tolerance", cfg.lab.semiconvexity_tolerance, "lab");
        read(l, "monotone_tolerance", cfg.lab.monotone_tolerance, "lab");
        read(l, "estimate_ceiling", cfg.lab.estimate_ceiling, "lab");
        read(l, "regularity_samples", cfg.lab.regularity_samples, "lab");
    }
    if (doc.contains("converge")) {
        const json& c = doc.at("converge");
        reject_unknown(c, {"refinements", "order_min", "order_max", "exact_threshold"}, "converge");
        read(c, "refinements", cfg.converge.refinements, "converge");
        read(c, "order_min", cfg.converge.order_min, "converge");
        read(c, "order_max", cfg.converge.order_max, "converge");
        read(c, "exact_threshold", cfg.converge.exact_threshold, "converge");
    }
    if (doc.contains("output")) {
        const json& o = doc.at("output");
        reject_unknown(o, {"directory", "formats"}, "output");
        std::string dir = cfg.output_dir.string();
        read(o, "directory", dir, "output");
        cfg.output_dir = dir;
        read(o, "formats", cfg.formats, "output");
    }
    if (doc.contains("run")) {
        const json& r = doc.at("run");
        reject_unknown(r, {"threads"}, "run");
        read(r, "threads", cfg.threads, "run");
    }
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(doc);
}

json to_json(const RunConfig& cfg) {
    json params = json::object();
    for (const auto& [k, v] : cfg.model.params) params[k] = v;
    json oracle = {{"n_paths", cfg.oracle.n_paths},
                   {"dt_sim", cfg.oracle.dt_sim},
                   {"seed", cfg.oracle.seed},
                   {"levels", cfg.oracle.levels},
                   {"intervals", cfg.oracle.intervals},
                   {"t0", cfg.oracle.t0},
                   {"x0", cfg.oracle.x0},
                   {"t_mid", cfg.oracle.t_mid},
                   {"table_x_min", cfg.oracle.table_x_min},
                   {"table_x_max", cfg.oracle.table_x_max},
                   {"table_nx", cfg.oracle.table_nx},
                   {"table_paths", cfg.oracle.table_paths},
                   {"budget", cfg.oracle.budget}};
    if (cfg.oracle.c_start_set) oracle["c_start"] = cfg.oracle.c_start;
    return {
        {"schema_version", kConfigSchemaVersion},
        {"model", {{"name", cfg.model.name}, {"params", params}}},
        {"problem",
         {{"T", cfg.problem.horizon}, {"c_lower", cfg.problem.c_lower}, {"c_upper", cfg.problem.c_upper}}},
        {"grid",
         {{"nt", cfg.grid.nt}, {"nx", cfg.grid.nx}, {"nc", cfg.grid.nc}, {"x_radius", cfg.grid.x_radius}}},
        {"scheme",
         {{"theta", cfg.scheme.theta},
          {"jump_tol", cfg.scheme.jump_tol},
          {"max_linear_iters", cfg.scheme.max_linear_iters},
          {"linear_tol", cfg.scheme.linear_tol}}},
        {"oracle", oracle},
        {"lab",
         {{"gammas", cfg.lab.gammas},
          {"value_csv", cfg.lab.value_csv},
          {"residual_constant", cfg.lab.residual_constant},
          {"sandwich_tolerance", cfg.lab.sandwich_tolerance},
          {"semiconvexity_tolerance", cfg.lab.semiconvexity_tolerance},
          {"monotone_tolerance", cfg.lab.monotone_tolerance},
          {"estimate_ceiling", cfg.lab.estimate_ceiling},
          {"regularity_samples", cfg.lab.regularity_samples}}},
        {"converge",
         {{"refinements", cfg.converge.refinements},
          {"order_min", cfg.converge.order_min},
          {"order_max", cfg.converge.order_max},
          {"exact_threshold", cfg.converge.exact_threshold}}},
        {"output", {{"directory", cfg.output_dir.string()}, {"formats", cfg.formats}}},
        {"run", {{"threads", cfg.threads}}},
    };
}

} // namespace ratchet
