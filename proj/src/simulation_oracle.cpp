#include "ratchet/simulation_oracle.hpp"

#include "ratchet/counter_rng.hpp"
#include "ratchet/errors.hpp"
#include "ratchet/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ratchet {

ControlPath::ControlPath(std::vector<double> levels, double c_start, double c_upper)
    : levels_(std::move(levels)), c_start_(c_start) {
    if (levels_.empty()) throw AdmissibilityError("control path needs at least one interval");
    for (double l : levels_)
        if (!std::isfinite(l)) throw AdmissibilityError("control level is not finite");
    if (levels_.front() < c_start)
        throw AdmissibilityError("control starts below the locked level c_start");
    if (levels_.back() > c_upper) throw AdmissibilityError("control exceeds c_upper");
    for (std::size_t r = 0; r + 1 < levels_.size(); ++r)
        if (levels_[r] > levels_[r + 1])
            throw AdmissibilityError("control path decreases; ratcheting controls are nondecreasing");
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct StepPlan {
    std::size_t steps_per_interval;
    std::size_t intervals;
    double dt;
    std::size_t total() const noexcept { return steps_per_interval * intervals; }
};

StepPlan plan_steps(double t0, double horizon, std::size_t intervals, double dt_sim) {
    if (!(dt_sim > 0.0) || !std::isfinite(dt_sim)) throw ConfigError("dt_sim must be positive");
    if (!(t0 < horizon)) throw ConfigError("start time must be before the horizon");
    const double len = (horizon - t0) / static_cast<double>(intervals);
    const double ratio = len / dt_sim;
    const auto steps = static_cast<std::size_t>(std::llround(ratio));
    if (steps < 1 || std::abs(static_cast<double>(steps) - ratio) > 1e-9 * std::max(1.0, ratio)) {
        std::ostringstream msg;
        msg << "dt_sim = " << dt_sim << " does not divide the control interval length " << len;
        throw ConfigError(msg.str());
    }
    return {steps, intervals, len / static_cast<double>(steps)};
}

// Euler-Maruyama integrator over one path with pre-drawn noise.
class PathKernel {
public:
    PathKernel(const Model& model, double t0, StepPlan plan)
        : m_(model), t0_(t0), plan_(plan), n_(static_cast<std::size_t>(model.spec.state_dim)),
          k_(static_cast<std::size_t>(model.spec.noise_dim)), drift_(n_), diff_(n_ * k_),
          noise_(plan.total() * k_), sqrt_dt_(std::sqrt(plan.dt)) {}

    std::size_t noise_dim() const noexcept { return k_; }
    std::size_t state_dim() const noexcept { return n_; }

    void draw(const CounterRng& rng, std::uint64_t path) {
        for (std::size_t r = 0; r < plan_.total(); ++r)
            for (std::size_t q = 0; q < k_; ++q) noise_[r * k_ + q] = rng.normal(path, r, q);
    }

    // Advances x in place over steps [0, steps) with the given per-interval
    // levels; returns the running cost, NaN after blow-up. If `trace` is set
    // every intermediate state is appended to it.
    double run(std::span<double> x, std::span<const double> levels, std::size_t steps,
               std::vector<double>* trace = nullptr) {
        double cost = 0.0;
        for (std::size_t r = 0; r < steps; ++r) {
            const double t = t0_ + static_cast<double>(r) * plan_.dt;
            const double c = levels[r / plan_.steps_per_interval];
            cost += m_.coef.running_cost(t, x, c) * plan_.dt;
            m_.coef.drift(t, x, c, drift_);
            m_.coef.diffusion(t, x, c, diff_);
            for (std::size_t d = 0; d < n_; ++d) {
                double dw = 0.0;
                for (std::size_t q = 0; q < k_; ++q) dw += diff_[d * k_ + q] * noise_[r * k_ + q];
                x[d] += drift_[d] * plan_.dt + dw * sqrt_dt_;
            }
            if (trace) trace->insert(trace->end(), x.begin(), x.end());
            bool finite = std::isfinite(cost);
            for (double xi : x) finite = finite && std::isfinite(xi);
            if (!finite) return kNaN;
        }
        return cost;
    }

private:
    const Model& m_;
    double t0_;
    StepPlan plan_;
    std::size_t n_, k_;
    std::vector<double> drift_, diff_, noise_;
    double sqrt_dt_;
};

void check_state(const Model& model, std::span<const double> x0) {
    if (x0.size() != static_cast<std::size_t>(model.spec.state_dim))
        throw ConfigError("initial state has the wrong dimension");
    for (double v : x0)
        if (!std::isfinite(v)) throw ConfigError("initial state is not finite");
}

} // namespace

CostEstimate summarize(std::span<const double> per_path) {
    std::vector<double> valid;
    valid.reserve(per_path.size());
    for (double v : per_path)
        if (!std::isnan(v)) valid.push_back(v);
    CostEstimate est;
    est.n_paths = valid.size();
    est.n_invalid = per_path.size() - valid.size();
    if (valid.empty()) return est;
    const auto n = static_cast<double>(valid.size());
    const auto [lo, hi] = std::minmax_element(valid.begin(), valid.end());
    if (*lo == *hi) {
        est.mean = *lo;
        return est;
    }
    est.mean = pairwise_sum(valid, 0, valid.size()) / n;
    if (valid.size() > 1) {
        for (double& v : valid) v = (v - est.mean) * (v - est.mean);
        const double var = pairwise_sum(valid, 0, valid.size()) / (n - 1.0);
        est.std_error = std::sqrt(var / n);
    }
    return est;
}

PathSample simulate_path(const Model& model, double t0, std::span<const double> x0,
                         const ControlPath& control, double dt_sim, std::uint64_t seed,
                         std::uint64_t path_index) {
    check_state(model, x0);
    const StepPlan plan = plan_steps(t0, model.spec.horizon, control.intervals(), dt_sim);
    PathKernel kernel(model, t0, plan);
    kernel.draw(CounterRng(seed), path_index);

    PathSample sample;
    sample.state_dim = model.spec.state_dim;
    sample.noise_seed = seed;
    sample.times.resize(plan.total() + 1);
    for (std::size_t r = 0; r <= plan.total(); ++r)
        sample.times[r] = t0 + static_cast<double>(r) * plan.dt;
    sample.times.back() = model.spec.horizon;
    sample.states.assign(x0.begin(), x0.end());
    std::vector<double> x(x0.begin(), x0.end());
    const double cost = kernel.run(x, control.levels(), plan.total(), &sample.states);
    sample.valid = !std::isnan(cost);
    return sample;
}

namespace {

// Per-path total costs for a block of controls sharing the same noise.
std::vector<std::vector<double>> costs_for(const Model& model, double t0,
                                           std::span<const double> x0,
                                           std::span<const ControlPath> controls,
                                           const SimulationOptions& opts) {
    const StepPlan plan = plan_steps(t0, model.spec.horizon, controls.front().intervals(), opts.dt_sim);
    const CounterRng rng(opts.seed);
    std::vector<std::vector<double>> out(controls.size(), std::vector<double>(opts.n_paths));

    const std::size_t workers = static_cast<std::size_t>(std::max(opts.threads, 1));
    const std::size_t chunk = (opts.n_paths + workers - 1) / workers;
    parallel_for(workers, opts.threads, [&](std::size_t w) {
        PathKernel kernel(model, t0, plan);
        std::vector<double> x(x0.size());
        const std::size_t end = std::min(opts.n_paths, (w + 1) * chunk);
        for (std::size_t p = w * chunk; p < end; ++p) {
            kernel.draw(rng, p);
            for (std::size_t u = 0; u < controls.size(); ++u) {
                std::copy(x0.begin(), x0.end(), x.begin());
                const double running = kernel.run(x, controls[u].levels(), plan.total());
                out[u][p] = std::isnan(running) ? kNaN : running + model.coef.terminal_cost(x);
            }
        }
    });
    return out;
}

void require_paths(const SimulationOptions& opts) {
    if (opts.n_paths < 1) throw ConfigError("n_paths must be at least 1");
}

void require_some_valid(const CostEstimate& est) {
    if (est.n_paths == 0) throw NumericalError("every simulated path blew up");
}

} // namespace

CostEstimate evaluate_cost(const Model& model, double t0, std::span<const double> x0,
                           const ControlPath& control, const SimulationOptions& opts) {
    check_state(model, x0);
    require_paths(opts);
    const auto per_path = costs_for(model, t0, x0, std::span(&control, 1), opts);
    auto est = summarize(per_path.front());
    require_some_valid(est);
    return est;
}

double count_controls(std::span<const double> c_levels, int n_intervals, double c_start) {
    const auto m = static_cast<double>(
        std::count_if(c_levels.begin(), c_levels.end(), [&](double l) { return l >= c_start; }));
    if (m == 0.0 || n_intervals < 1) return 0.0;
    // C(n + m - 1, n) as a running product; exact for the sizes that pass the budget.
    double count = 1.0;
    for (int i = 1; i <= n_intervals; ++i) count = count * (m - 1.0 + i) / i;
    return std::round(count);
}

std::vector<ControlPath> enumerate_controls(std::span<const double> c_levels, int n_intervals,
                                            double c_start, double c_upper, double budget) {
    if (n_intervals < 1) throw ConfigError("n_intervals must be at least 1");
    if (!std::is_sorted(c_levels.begin(), c_levels.end()) ||
        std::adjacent_find(c_levels.begin(), c_levels.end()) != c_levels.end())
        throw ConfigError("control levels must be strictly ascending");
    const double count = count_controls(c_levels, n_intervals, c_start);
    if (count > budget) {
        std::ostringstream msg;
        msg.precision(17);
        msg << "enumeration needs " << count << " control paths, budget is " << budget;
        throw BudgetError(msg.str(), count);
    }
    std::vector<double> levels;
    for (double l : c_levels)
        if (l >= c_start) levels.push_back(l);
    if (levels.empty()) throw ConfigError("no control level at or above c_start");

    std::vector<ControlPath> out;
    out.reserve(static_cast<std::size_t>(count));
    std::vector<std::size_t> idx(static_cast<std::size_t>(n_intervals), 0);
    std::vector<double> path(idx.size());
    while (true) {
        for (std::size_t r = 0; r < idx.size(); ++r) path[r] = levels[idx[r]];
        out.emplace_back(path, c_start, c_upper);
        // Next nondecreasing index tuple in lexicographic order.
        std::size_t pos = idx.size();
        while (pos > 0 && idx[pos - 1] + 1 == levels.size()) --pos;
        if (pos == 0) break;
        const std::size_t bumped = idx[pos - 1] + 1;
        for (std::size_t r = pos - 1; r < idx.size(); ++r) idx[r] = bumped;
    }
    return out;
}

BruteForceResult brute_force_value(const Model& model, double t0, std::span<const double> x0,
                                   double c_start, std::span<const double> c_levels,
                                   int n_intervals, const SimulationOptions& opts) {
    check_state(model, x0);
    require_paths(opts);
    auto controls =
        enumerate_controls(c_levels, n_intervals, c_start, model.spec.c_upper, opts.budget);

    // Bounded memory: per-path costs for at most ~2^24 (control, path) cells at once.
    const std::size_t block = std::max<std::size_t>(1, (std::size_t{1} << 24) / opts.n_paths);
    std::vector<CostEstimate> costs;
    costs.reserve(controls.size());
    for (std::size_t begin = 0; begin < controls.size(); begin += block) {
        const std::size_t len = std::min(block, controls.size() - begin);
        const auto per_path =
            costs_for(model, t0, x0, std::span(controls).subspan(begin, len), opts);
        for (const auto& pp : per_path) {
            costs.push_back(summarize(pp));
            require_some_valid(costs.back());
        }
    }
    std::size_t best = 0;
    for (std::size_t u = 1; u < costs.size(); ++u)
        if (costs[u].mean < costs[best].mean) best = u;
    return {costs[best], controls[best], std::move(controls), std::move(costs)};
}

namespace {

double interpolate(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
    if (x <= xs.front()) return ys.front();
    if (x >= xs.back()) return ys.back();
    const auto it = std::upper_bound(xs.begin(), xs.end(), x);
    const auto hi = static_cast<std::size_t>(it - xs.begin());
    const double w = (x - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
    return (1.0 - w) * ys[hi - 1] + w * ys[hi];
}

} // namespace

DppResult dpp_check(const Model& model, double t0, double x0, double c_start, double t_mid,
                    const DppConfig& cfg) {
    if (model.spec.state_dim != 1) throw ConfigError("dpp_check supports a scalar state only");
    const double T = model.spec.horizon;
    if (!(t0 < t_mid && t_mid < T)) throw ConfigError("dpp_check needs t0 < t_mid < T");
    if (cfg.table_nx < 2 || !(cfg.table_x_min < cfg.table_x_max))
        throw ConfigError("dpp value table needs at least 2 ordered nodes");
    require_paths(cfg.sim);

    const int n = cfg.n_intervals;
    const double len = (T - t0) / n;
    const double ratio = (t_mid - t0) / len;
    const long n1 = std::lround(ratio);
    if (n1 < 1 || n1 >= n || std::abs(ratio - static_cast<double>(n1)) > 1e-9 * n)
        throw ConfigError("t_mid must fall on an interior control interval boundary");

    DppResult res;
    const double x0v[] = {x0};
    const auto lhs = brute_force_value(model, t0, x0v, c_start, cfg.levels, n, cfg.sim);
    res.lhs = lhs.best.mean;

    // Value table V(t_mid, x, c') from the remaining n - n1 intervals; its noise
    // stream is independent of the first segment.
    std::vector<double> levels;
    for (double l : cfg.levels)
        if (l >= c_start) levels.push_back(l);
    std::vector<double> xs(static_cast<std::size_t>(cfg.table_nx));
    for (int j = 0; j < cfg.table_nx; ++j)
        xs[static_cast<std::size_t>(j)] =
            cfg.table_x_min + (cfg.table_x_max - cfg.table_x_min) * j / (cfg.table_nx - 1);
    SimulationOptions table_opts = cfg.sim;
    table_opts.seed = mix64(cfg.sim.seed ^ 0x7ab1e5eedULL);
    if (cfg.table_paths > 0) table_opts.n_paths = cfg.table_paths;
    std::vector<std::vector<double>> table(levels.size(), std::vector<double>(xs.size()));
    for (std::size_t l = 0; l < levels.size(); ++l)
        for (std::size_t j = 0; j < xs.size(); ++j) {
            const double xj[] = {xs[j]};
            table[l][j] = brute_force_value(model, t_mid, xj, levels[l], cfg.levels,
                                            n - static_cast<int>(n1), table_opts)
                              .best.mean;
        }

    // First segment with the same noise as the left-hand side.
    const auto first = enumerate_controls(cfg.levels, static_cast<int>(n1), c_start,
                                          model.spec.c_upper, cfg.sim.budget);
    const StepPlan plan = plan_steps(t0, T, static_cast<std::size_t>(n), cfg.sim.dt_sim);
    const CounterRng rng(cfg.sim.seed);
    const std::size_t steps = plan.steps_per_interval * static_cast<std::size_t>(n1);
    std::vector<std::vector<double>> per_path(first.size(), std::vector<double>(cfg.sim.n_paths));
    const std::size_t workers = static_cast<std::size_t>(std::max(cfg.sim.threads, 1));
    const std::size_t chunk = (cfg.sim.n_paths + workers - 1) / workers;
    parallel_for(workers, cfg.sim.threads, [&](std::size_t w) {
        PathKernel kernel(model, t0, plan);
        const std::size_t end = std::min(cfg.sim.n_paths, (w + 1) * chunk);
        for (std::size_t p = w * chunk; p < end; ++p) {
            kernel.draw(rng, p);
            for (std::size_t u = 0; u < first.size(); ++u) {
                double x[] = {x0};
                const double running = kernel.run(x, first[u].levels(), steps);
                const auto lvl = static_cast<std::size_t>(
                    std::lower_bound(levels.begin(), levels.end(), first[u].levels().back()) -
                    levels.begin());
                per_path[u][p] = std::isnan(running) ? kNaN : running + interpolate(xs, table[lvl], x[0]);
            }
        }
    });
    CostEstimate best_rhs;
    bool have = false;
    for (std::size_t u = 0; u < first.size(); ++u) {
        const auto est = summarize(per_path[u]);
        require_some_valid(est);
        if (!have || est.mean < best_rhs.mean) {
            best_rhs = est;
            res.first_segment = first[u].levels();
            have = true;
        }
    }
    res.rhs = best_rhs.mean;
    res.residual = std::abs(res.lhs - res.rhs);
    res.combined_std_error = std::hypot(lhs.best.std_error, best_rhs.std_error);
    return res;
}

CostEstimate evaluate_feedback(const Model& model, double t0, double x0, double c0,
                               const std::function<double(double, double, double)>& rule,
                               const SimulationOptions& opts) {
    if (model.spec.state_dim != 1 || model.spec.noise_dim != 1)
        throw ConfigError("evaluate_feedback supports scalar state and noise only");
    require_paths(opts);
    const StepPlan plan = plan_steps(t0, model.spec.horizon, 1, opts.dt_sim);
    const CounterRng rng(opts.seed);
    const double sqrt_dt = std::sqrt(plan.dt);
    const double c_upper = model.spec.c_upper;
    std::vector<double> per_path(opts.n_paths);
    parallel_for(opts.n_paths, opts.threads, [&](std::size_t p) {
        double x = x0;
        double c = c0;
        double cost = 0.0;
        for (std::size_t r = 0; r < plan.total(); ++r) {
            const double t = t0 + static_cast<double>(r) * plan.dt;
            const double next = rule(t, x, c);
            if (!(next >= c) || next > c_upper)
                throw AdmissibilityError("feedback rule left the ratcheting constraint c <= c' <= c_upper");
            c = next;
            cost += model.coef.f(t, x, c) * plan.dt;
            x += model.coef.b(t, x, c) * plan.dt +
                 model.coef.sigma(t, x, c) * sqrt_dt * rng.normal(p, r, 0);
            if (!std::isfinite(x) || !std::isfinite(cost)) {
                per_path[p] = kNaN;
                return;
            }
        }
        per_path[p] = cost + model.coef.H(x);
    });
    auto est = summarize(per_path);
    require_some_valid(est);
    return est;
}

} // namespace ratchet
