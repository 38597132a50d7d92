#include "ratchet/commands.hpp"

#include "ratchet/acceptance.hpp"
#include "ratchet/errors.hpp"
#include "ratchet/viscosity_lab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace ratchet {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

bool wants(const RunConfig& cfg, const std::string& format) {
    return std::find(cfg.formats.begin(), cfg.formats.end(), format) != cfg.formats.end();
}

template <typename Writer>
void write_file(const fs::path& path, Writer&& writer) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    writer(out);
    out.flush();
    if (!out) throw IoError("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& doc) {
    write_file(path, [&](std::ostream& out) { out << doc.dump(2) << '\n'; });
}

Model model_of(const RunConfig& cfg) { return build_model(cfg.model, cfg.problem); }

Grid grid_of(const RunConfig& cfg, int factor = 1) {
    return make_grid(cfg.problem, cfg.grid.nt * factor, cfg.grid.nx * factor,
                     cfg.grid.nc * factor, cfg.grid.x_radius);
}

json diagnostics_json(const SolveDiagnostics& d) {
    return {{"time_steps", d.time_steps},
            {"jump_nodes", d.jump_nodes},
            {"max_refinement_iters", d.max_refinement_iters},
            {"max_linear_residual", d.max_linear_residual},
            {"seconds", d.seconds}};
}

json grid_json(const Grid& g) {
    return {{"n_t", g.n_t()}, {"n_x", g.n_x()}, {"n_c", g.n_c()},   {"dt", g.dt},
            {"h", g.h},       {"dc", g.dc},     {"reporting_radius", g.reporting_radius}};
}

json closed_form_json(const Model& model, const ValueField& v) {
    const auto exact = closed_form_value(model);
    if (!exact) return nullptr;
    const Grid& g = v.grid();
    double err_t0 = 0.0, err_all = 0.0;
    for (std::size_t i = 0; i < g.n_t(); ++i)
        for (std::size_t j = 0; j < g.n_x(); ++j)
            for (std::size_t k = 0; k < g.n_c(); ++k) {
                const double e =
                    std::abs(v.at(i, j, k) - (*exact)(g.t_nodes[i], g.x_nodes[j], g.c_nodes[k]));
                err_all = std::max(err_all, e);
                if (i == 0 && g.reporting(j)) err_t0 = std::max(err_t0, e);
            }
    return {{"max_abs_error_t0_reporting", err_t0},
            {"max_abs_error_all", err_all},
            {"bound", 2.0 * (g.h + g.dt)}};
}

std::vector<double> oracle_levels(const RunConfig& cfg) {
    if (!cfg.oracle.levels.empty()) return cfg.oracle.levels;
    return grid_of(cfg).c_nodes;
}

double oracle_c_start(const RunConfig& cfg, const std::vector<double>& levels) {
    return cfg.oracle.c_start_set ? cfg.oracle.c_start : levels.front();
}

SimulationOptions sim_options(const RunConfig& cfg) {
    SimulationOptions s;
    s.n_paths = cfg.oracle.n_paths;
    s.dt_sim = cfg.oracle.dt_sim;
    s.seed = cfg.oracle.seed;
    s.threads = cfg.threads;
    s.budget = cfg.oracle.budget;
    return s;
}

ValueField load_or_solve(const RunConfig& cfg, const Model& model, std::ostream& log,
                         std::string& source) {
    fs::path csv = cfg.lab.value_csv.empty() ? cfg.output_dir / "value.csv" : fs::path(cfg.lab.value_csv);
    if (!cfg.lab.value_csv.empty() || fs::exists(csv)) {
        std::ifstream in(csv, std::ios::binary);
        if (!in) throw IoError("cannot open " + csv.string());
        source = csv.string();
        log << "verify: reading " << source << '\n';
        return read_value_csv(in);
    }
    source = "solve";
    log << "verify: no value.csv found, solving\n";
    return solve_backward(model, grid_of(cfg), cfg.scheme, cfg.threads).value;
}

} // namespace

RunConfig resolve_config(const CommandOptions& opts) {
    if (!opts.config) throw ConfigError("--config is required");
    RunConfig cfg = load_config(*opts.config);
    if (opts.out) cfg.output_dir = *opts.out;
    if (opts.seed) cfg.oracle.seed = *opts.seed;
    if (opts.threads) cfg.threads = *opts.threads;
    cfg.validate();
    return cfg;
}

OutputLock::OutputLock(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    lock_path_ = dir / ".lock";
    std::FILE* f = std::fopen(lock_path_.string().c_str(), "wx");
    if (!f) {
        lock_path_.clear();
        throw IoError("output directory " + dir.string() + " is locked by another run");
    }
    std::fclose(f);
}

OutputLock::~OutputLock() {
    if (lock_path_.empty()) return;
    std::error_code ec;
    fs::remove(lock_path_, ec);
}

std::optional<std::function<double(double, double, double)>> closed_form_value(const Model& model) {
    const double T = model.spec.horizon;
    const double c_bar = model.spec.c_upper;
    if (model.id.name == "CONSTANT")
        return [](double, double x, double) { return x; };
    if (model.id.name == "LINEAR_RATE")
        return [T](double t, double, double c) { return c * (T - t); };
    if (model.id.name == "PAYOUT")
        return [T, c_bar](double t, double, double) { return -c_bar * (T - t); };
    return std::nullopt;
}

int cmd_solve(const RunConfig& cfg, std::ostream& log) {
    const Model model = model_of(cfg);
    const Grid grid = grid_of(cfg);
    check_cfl(model, grid, cfg.scheme);
    OutputLock lock(cfg.output_dir);

    log << "solve: " << model.id.name << " on " << grid.n_t() << "x" << grid.n_x() << "x"
        << grid.n_c() << " nodes\n";
    const SolveResult res = solve_backward(model, grid, cfg.scheme, cfg.threads);
    if (wants(cfg, "csv")) {
        write_file(cfg.output_dir / "value.csv",
                   [&](std::ostream& out) { write_value_csv(out, res.value); });
        write_file(cfg.output_dir / "policy.csv",
                   [&](std::ostream& out) { write_policy_csv(out, res.policy); });
    }
    json summary = {{"command", "solve"},
                    {"config", to_json(cfg)},
                    {"model", {{"name", model.id.name}, {"params", model.id.params}}},
                    {"grid", grid_json(grid)},
                    {"diagnostics", diagnostics_json(res.diagnostics)},
                    {"closed_form", closed_form_json(model, res.value)}};
    write_json(cfg.output_dir / "summary.json", summary);
    log << "solve: done in " << res.diagnostics.seconds << " s, " << res.diagnostics.jump_nodes
        << " jump nodes\n";
    return kExitOk;
}

int cmd_oracle(const RunConfig& cfg, std::ostream& log) {
    const Model model = model_of(cfg);
    const std::vector<double> levels = oracle_levels(cfg);
    const double c_start = oracle_c_start(cfg, levels);
    const double count = count_controls(levels, cfg.oracle.intervals, c_start);
    if (count > cfg.oracle.budget) {
        std::ostringstream msg;
        msg << "oracle enumeration needs " << std::setprecision(17) << count
            << " control paths, budget is " << cfg.oracle.budget;
        throw BudgetError(msg.str(), count);
    }
    OutputLock lock(cfg.output_dir);
    const SimulationOptions sim = sim_options(cfg);
    const double x0[] = {cfg.oracle.x0};

    log << "oracle: enumerating " << count << " controls x " << sim.n_paths << " paths\n";
    const BruteForceResult bf =
        brute_force_value(model, cfg.oracle.t0, x0, c_start, levels, cfg.oracle.intervals, sim);

    json doc = {{"model", model.id.name},
                {"t0", cfg.oracle.t0},
                {"x0", cfg.oracle.x0},
                {"c_start", c_start},
                {"levels", levels},
                {"value_mean", bf.best.mean},
                {"value_stderr", bf.best.std_error},
                {"argmin_path", bf.argmin.levels()},
                {"n_controls", bf.controls.size()},
                {"n_paths", bf.best.n_paths},
                {"n_invalid", bf.best.n_invalid}};

    const int n = cfg.oracle.intervals;
    if (n >= 2) {
        const double T = cfg.problem.horizon;
        const double t_mid =
            cfg.oracle.t_mid != 0.0 ? cfg.oracle.t_mid : cfg.oracle.t0 + (T - cfg.oracle.t0) * (n / 2) / n;
        DppConfig dc;
        dc.levels = levels;
        dc.n_intervals = n;
        dc.sim = sim;
        dc.table_x_min = cfg.oracle.table_x_min;
        dc.table_x_max = cfg.oracle.table_x_max;
        dc.table_nx = cfg.oracle.table_nx;
        dc.table_paths = cfg.oracle.table_paths;
        log << "oracle: dynamic programming check at t_mid = " << t_mid << '\n';
        const DppResult d = dpp_check(model, cfg.oracle.t0, cfg.oracle.x0, c_start, t_mid, dc);
        doc["dpp"] = {{"t_mid", t_mid},
                      {"residual", d.residual},
                      {"lhs", d.lhs},
                      {"rhs", d.rhs},
                      {"combined_std_error", d.combined_std_error},
                      {"first_segment", d.first_segment},
                      {"pass", d.residual <= 1e-2 + 3.0 * d.combined_std_error}};
    } else {
        doc["dpp"] = nullptr;
    }
    if (wants(cfg, "json")) write_json(cfg.output_dir / "oracle.json", doc);
    write_json(cfg.output_dir / "summary.json",
               {{"command", "oracle"}, {"config", to_json(cfg)}, {"result", doc}});
    log << "oracle: value " << bf.best.mean << " +- " << bf.best.std_error << '\n';
    return kExitOk;
}

int cmd_verify(const RunConfig& cfg, std::ostream& log) {
    const Model model = model_of(cfg);
    OutputLock lock(cfg.output_dir);
    std::string source;
    const ValueField v = load_or_solve(cfg, model, log, source);
    const Grid& g = v.grid();
    json checks = json::object();
    bool all_pass = true;
    auto record = [&](const std::string& name, bool pass, json detail) {
        detail["pass"] = pass;
        checks[name] = std::move(detail);
        all_pass = all_pass && pass;
        log << "verify: " << name << (pass ? " pass" : " FAIL") << '\n';
    };

    // Nondecreasing in c.
    double mono = 0.0;
    for (std::size_t i = 0; i < g.n_t(); ++i)
        for (std::size_t j = 0; j < g.n_x(); ++j)
            for (std::size_t k = 0; k + 1 < g.n_c(); ++k)
                mono = std::max(mono, v.at(i, j, k) - v.at(i, j, k + 1));
    record("monotone_in_c", mono <= cfg.lab.monotone_tolerance,
           {{"max_decrease", mono}, {"tolerance", cfg.lab.monotone_tolerance}});

    // The top control slice equals the frozen-control solution G.
    const std::vector<double> G = solve_boundary_G(model, g, cfg.scheme);
    double boundary = 0.0;
    for (std::size_t i = 0; i < g.n_t(); ++i)
        for (std::size_t j = 0; j < g.n_x(); ++j) {
            const double vij = v.at(i, j, g.n_c() - 1);
            boundary = std::max(boundary, std::abs(vij - G[i * g.n_x() + j]) / (1.0 + std::abs(vij)));
        }
    record("boundary_slice", boundary <= 1e-9, {{"max_relative_deviation", boundary}});

    const ResidualReport rr = residual_check(v, model);
    const double scale = g.h + g.dt + g.dc;
    const double tol = cfg.lab.residual_constant * scale;
    record("residual", rr.max_r1 <= tol && rr.max_r2 <= tol && rr.min_combined >= -tol,
           {{"max_r1", rr.max_r1},
            {"max_r2", rr.max_r2},
            {"min_combined", rr.min_combined},
            {"max_combined", rr.max_combined},
            {"constant", rr.max_combined / scale},
            {"tolerance", tol},
            {"interior_nodes", rr.interior_nodes}});

    const RegularityConstants reg = estimate_regularity(model, cfg.lab.regularity_samples);
    const EstimateReport est = estimate_fit(v, reg, cfg.lab.estimate_ceiling);
    record("estimates", !est.exceeds_ceiling,
           {{"growth_K", est.growth_K},
            {"time_holder_K", est.time_holder_K},
            {"c_holder_K", est.c_holder_K},
            {"max_violation", est.max_violation},
            {"ceiling", cfg.lab.estimate_ceiling}});

    json envelopes = json::array();
    bool env_pass = true;
    for (double gamma : cfg.lab.gammas) {
        const ConvolutionField up = sup_convolution(v, gamma);
        const ConvolutionField lo = inf_convolution(v, gamma);
        double order = 0.0;
        const auto vals = v.values();
        for (std::size_t n = 0; n < vals.size(); ++n)
            order = std::max({order, lo.values[n] - vals[n], vals[n] - up.values[n]});
        const double sc_up = semiconvexity_check(up);
        const double sc_lo = semiconvexity_check(lo);
        const bool pass = order == 0.0 && sc_up <= cfg.lab.semiconvexity_tolerance &&
                          sc_lo <= cfg.lab.semiconvexity_tolerance;
        env_pass = env_pass && pass;
        envelopes.push_back({{"gamma", gamma},
                             {"ordering_violation", order},
                             {"semiconvexity_deficiency", sc_up},
                             {"semiconcavity_deficiency", sc_lo},
                             {"pass", pass}});
    }
    record("envelopes", env_pass, {{"levels", envelopes}});

    const SandwichFit fit = sandwich_scaling(v, cfg.lab.gammas, reg.kappa_prime());
    const double target = sandwich_rate(reg.kappa_prime()) - cfg.lab.sandwich_tolerance;
    json slope = fit.slope ? json(*fit.slope) : json("unbounded");
    record("sandwich", !fit.slope || *fit.slope >= target,
           {{"gammas", fit.gammas}, {"gaps", fit.gaps}, {"slope", slope}, {"target", target},
            {"kappa_prime", reg.kappa_prime()}});

    const json doc = {{"model", model.id.name},
                      {"source", source},
                      {"grid", grid_json(g)},
                      {"regularity", {{"K", reg.lipschitz_K()}, {"kappa", reg.holder_kappa()}}},
                      {"checks", checks},
                      {"pass", all_pass}};
    if (wants(cfg, "json")) write_json(cfg.output_dir / "verify.json", doc);
    if (wants(cfg, "csv")) {
        write_file(cfg.output_dir / "residual.csv", [&](std::ostream& out) {
            out << "t,x,c,r1,r2\n" << std::setprecision(17);
            for (std::size_t i = 0; i < g.n_t(); ++i)
                for (std::size_t j = 0; j < g.n_x(); ++j)
                    for (std::size_t k = 0; k < g.n_c(); ++k) {
                        const std::size_t n = g.index(i, j, k);
                        if (std::isnan(rr.r1[n])) continue;
                        out << g.t_nodes[i] << ',' << g.x_nodes[j] << ',' << g.c_nodes[k] << ','
                            << rr.r1[n] << ',' << rr.r2[n] << '\n';
                    }
        });
        write_file(cfg.output_dir / "sandwich.csv", [&](std::ostream& out) {
            out << "gamma,gap\n" << std::setprecision(17);
            for (std::size_t q = 0; q < fit.gammas.size(); ++q)
                out << fit.gammas[q] << ',' << fit.gaps[q] << '\n';
        });
    }
    write_json(cfg.output_dir / "summary.json",
               {{"command", "verify"}, {"config", to_json(cfg)}, {"pass", all_pass}});
    return all_pass ? kExitOk : kExitVerify;
}

int cmd_converge(const RunConfig& cfg, std::ostream& log) {
    const Model model = model_of(cfg);
    std::vector<Grid> grids;
    for (int l = 0; l < cfg.converge.refinements; ++l) {
        grids.push_back(grid_of(cfg, 1 << l));
        check_cfl(model, grids.back(), cfg.scheme);
    }
    OutputLock lock(cfg.output_dir);
    const ConvergenceStudy study = convergence_study(model, grids, cfg.scheme, cfg.threads);

    const bool exact = std::all_of(study.sup_diffs.begin(), study.sup_diffs.end(), [&](double d) {
        return d <= cfg.converge.exact_threshold * (1.0 + study.max_abs_value);
    });
    const double order = study.orders.empty() ? 0.0 : study.orders.back();
    const bool pass = exact || (order >= cfg.converge.order_min && order <= cfg.converge.order_max);

    write_file(cfg.output_dir / "convergence.csv", [&](std::ostream& out) {
        out << "level,nt,nx,nc,h,dt,dc,sup_diff,order\n" << std::setprecision(17);
        for (std::size_t l = 0; l < grids.size(); ++l) {
            const Grid& g = grids[l];
            out << l << ',' << g.n_t() - 1 << ',' << g.n_x() - 1 << ',' << g.n_c() << ',' << g.h
                << ',' << g.dt << ',' << g.dc << ',';
            if (l < study.sup_diffs.size()) out << study.sup_diffs[l];
            out << ',';
            if (l >= 1 && l - 1 < study.orders.size())
                out << (exact ? std::string("exact") : std::to_string(study.orders[l - 1]));
            out << '\n';
        }
    });
    json orders = exact ? json("exact") : json(study.orders);
    write_json(cfg.output_dir / "summary.json",
               {{"command", "converge"},
                {"config", to_json(cfg)},
                {"sup_diffs", study.sup_diffs},
                {"orders", orders},
                {"seconds", study.seconds},
                {"pass", pass}});
    log << "converge: order " << (exact ? std::string("exact") : std::to_string(order))
        << (pass ? " pass" : " FAIL") << '\n';
    return pass ? kExitOk : kExitVerify;
}

int run_verb(const std::string& verb, const CommandOptions& opts, std::ostream& log,
             std::ostream& err) {
    try {
        if (verb == "acceptance") {
            AcceptanceOptions a;
            if (opts.config) {
                const RunConfig base = resolve_config(opts);
                a.output_dir = base.output_dir;
                a.threads = base.threads;
            }
            if (opts.threads) a.threads = *opts.threads;
            if (opts.out) a.output_dir = *opts.out;
            return run_acceptance(a, log).all_pass() ? kExitOk : kExitVerify;
        }
        const RunConfig cfg = resolve_config(opts);
        if (verb == "solve") return cmd_solve(cfg, log);
        if (verb == "oracle") return cmd_oracle(cfg, log);
        if (verb == "verify") return cmd_verify(cfg, log);
        if (verb == "converge") return cmd_converge(cfg, log);
        throw ConfigError("unknown verb '" + verb + "'");
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const IoError& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const fs::filesystem_error& e) {
        err << "i/o error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        err << "numerical error: " << e.what() << '\n';
        return kExitNumerical;
    }
}

} // namespace ratchet
