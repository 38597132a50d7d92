#pragma once

#include "ratchet/discretization.hpp"
#include "ratchet/model.hpp"

#include <span>
#include <vector>

namespace ratchet {

struct SchemeConfig {
    double theta = 1.0;        // 0 explicit, 1 fully implicit
    double jump_tol = 1e-9;    // relative: a node jumps when raw - projected > jump_tol (1 + |raw|)
    int max_linear_iters = 3;  // refinement sweeps after the direct tridiagonal solve
    double linear_tol = 1e-12; // relative residual accepted from the tridiagonal solve

    void validate() const;
};

struct StepStats {
    int refinement_iters = 0;
    double linear_residual = 0.0;
};

/// Largest explicit time step keeping the scheme monotone:
/// h^2 / (max sigma^2 + h max |b|) over all grid nodes.
double monotone_dt_limit(const Model& model, const Grid& grid);

/// Throws NumericalError when the explicit part of the theta-scheme violates
/// (1 - theta) dt <= monotone_dt_limit.
void check_cfl(const Model& model, const Grid& grid, const SchemeConfig& cfg);

/// One backward step of v_t + 1/2 sigma^2 v_xx + b v_x + f = 0 from t_{i+1}
/// to t_i at control level c, for a line of values over the x grid.
///
/// Upwinded first difference, central second difference. At x_min and x_max
/// the second difference is dropped and the drift uses the inward one-sided
/// difference, which is linear extrapolation of v in x.
std::vector<double> theta_step(const Model& model, const Grid& grid, std::size_t i, double c,
                               std::span<const double> next, const SchemeConfig& cfg,
                               StepStats* stats = nullptr);

/// Solves a tridiagonal system in place (Thomas algorithm), then refines
/// against the residual. `lower[0]` and `upper[n-1]` are ignored.
void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                       std::span<const double> upper, std::span<const double> rhs,
                       std::span<double> solution, const SchemeConfig& cfg,
                       StepStats* stats = nullptr);

} // namespace ratchet
