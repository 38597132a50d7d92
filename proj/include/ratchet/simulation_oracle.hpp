#pragma once

#include "ratchet/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace ratchet {

/// Nondecreasing step control: one level per equal-length interval of [t0, T].
class ControlPath {
public:
    /// Throws AdmissibilityError unless c_start <= levels[0] <= ... <= c_upper.
    ControlPath(std::vector<double> levels, double c_start, double c_upper);

    const std::vector<double>& levels() const noexcept { return levels_; }
    std::size_t intervals() const noexcept { return levels_.size(); }
    double c_start() const noexcept { return c_start_; }

private:
    std::vector<double> levels_;
    double c_start_;
};

struct PathSample {
    std::vector<double> times;
    std::vector<double> states; // row r holds X(times[r]), state_dim entries
    int state_dim = 1;
    std::uint64_t noise_seed = 0;
    bool valid = true;

    std::span<const double> state(std::size_t r) const {
        return {states.data() + r * static_cast<std::size_t>(state_dim),
                static_cast<std::size_t>(state_dim)};
    }
};

struct CostEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;   // paths contributing to the mean
    std::size_t n_invalid = 0; // paths discarded after blow-up
};

struct SimulationOptions {
    std::size_t n_paths = 1000;
    double dt_sim = 0.01;
    std::uint64_t seed = 1;
    int threads = 1;
    double budget = 1e6; // cap on enumerated control paths
};

/// Euler-Maruyama X_{r+1} = X_r + b dt + sigma sqrt(dt) xi_r. The normals are
/// keyed by (seed, path_index, step), so every control sees the same noise.
PathSample simulate_path(const Model& model, double t0, std::span<const double> x0,
                         const ControlPath& control, double dt_sim, std::uint64_t seed,
                         std::uint64_t path_index = 0);

/// Monte-Carlo J(t0, x0, u): left-endpoint quadrature of f plus H(X_T).
CostEstimate evaluate_cost(const Model& model, double t0, std::span<const double> x0,
                           const ControlPath& control, const SimulationOptions& opts);

/// Every nondecreasing sequence of length n_intervals over the levels >= c_start.
/// Throws BudgetError when the count C(n + m - 1, n) exceeds `budget`.
std::vector<ControlPath> enumerate_controls(std::span<const double> c_levels, int n_intervals,
                                            double c_start, double c_upper,
                                            double budget = 1e6);

/// Number of nondecreasing sequences: C(n + m - 1, n) with m = levels >= c_start.
double count_controls(std::span<const double> c_levels, int n_intervals, double c_start);

struct BruteForceResult {
    CostEstimate best;
    ControlPath argmin;
    std::vector<ControlPath> controls;
    std::vector<CostEstimate> costs; // aligned with controls
};

/// Minimum of the Monte-Carlo cost over all enumerated step controls, with
/// common random numbers across controls.
BruteForceResult brute_force_value(const Model& model, double t0, std::span<const double> x0,
                                   double c_start, std::span<const double> c_levels,
                                   int n_intervals, const SimulationOptions& opts);

struct DppConfig {
    std::vector<double> levels;
    int n_intervals = 4;
    SimulationOptions sim;
    // Value table at t_mid over [table_x_min, table_x_max].
    double table_x_min = -3.0;
    double table_x_max = 3.0;
    int table_nx = 13;
    std::size_t table_paths = 0; // 0: use sim.n_paths
};

struct DppResult {
    double residual = 0.0;
    double lhs = 0.0;
    double rhs = 0.0;
    double combined_std_error = 0.0;
    std::vector<double> first_segment; // argmin levels on [t0, t_mid]
};

/// |V(t0) - min_u E[int_{t0}^{t_mid} f + V(t_mid, X(t_mid), u(t_mid))]| with
/// both sides computed by enumeration. Scalar state only.
DppResult dpp_check(const Model& model, double t0, double x0, double c_start, double t_mid,
                    const DppConfig& cfg);

/// Monte-Carlo cost of a feedback rule c' = rule(t, x, c), applied at the
/// start of every simulation step. Scalar state only.
CostEstimate evaluate_feedback(const Model& model, double t0, double x0, double c0,
                               const std::function<double(double, double, double)>& rule,
                               const SimulationOptions& opts);

/// Deterministic mean and standard error of per-path samples; NaN entries are
/// counted as invalid and skipped.
CostEstimate summarize(std::span<const double> per_path);

} // namespace ratchet
