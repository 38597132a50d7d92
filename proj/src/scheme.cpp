#include "ratchet/scheme.hpp"

#include "ratchet/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ratchet {

void SchemeConfig::validate() const {
    if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("scheme.theta must lie in [0, 1]");
    if (!(jump_tol > 0.0) || !std::isfinite(jump_tol))
        throw ConfigError("scheme.jump_tol must be positive");
    if (max_linear_iters < 0) throw ConfigError("scheme.max_linear_iters must be >= 0");
    if (!(linear_tol > 0.0) || !std::isfinite(linear_tol))
        throw ConfigError("scheme.linear_tol must be positive");
}

namespace {

// Coefficients of the discrete operator L v = 1/2 sigma^2 v_xx + b v_x at one level.
struct Stencil {
    std::vector<double> lower, diag, upper;
};

Stencil build_stencil(const Model& model, const Grid& grid, double t, double c) {
    const std::size_t n = grid.n_x();
    const double h = grid.h;
    Stencil s{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t j = 0; j < n; ++j) {
        const double x = grid.x_nodes[j];
        const double b = model.coef.b(t, x, c);
        const double sig = model.coef.sigma(t, x, c);
        if (!std::isfinite(b) || !std::isfinite(sig))
            throw ModelError("non-finite coefficient evaluation");
        if (j == 0) {
            s.upper[j] = b / h;
            s.diag[j] = -b / h;
        } else if (j + 1 == n) {
            s.lower[j] = -b / h;
            s.diag[j] = b / h;
        } else {
            const double a = 0.5 * sig * sig / (h * h);
            s.lower[j] = a + std::max(-b, 0.0) / h;
            s.upper[j] = a + std::max(b, 0.0) / h;
            s.diag[j] = -(s.lower[j] + s.upper[j]);
        }
    }
    return s;
}

void thomas(std::span<const double> lower, std::span<const double> diag,
            std::span<const double> upper, std::span<const double> rhs, std::span<double> out) {
    const std::size_t n = diag.size();
    std::vector<double> cp(n), dp(n);
    double pivot = diag[0];
    for (std::size_t j = 0;; ++j) {
        if (!std::isfinite(pivot) || std::abs(pivot) < 1e-300)
            throw NumericalError("tridiagonal solve hit a zero pivot");
        cp[j] = (j + 1 < n) ? upper[j] / pivot : 0.0;
        dp[j] = ((j == 0) ? rhs[0] : rhs[j] - lower[j] * dp[j - 1]) / pivot;
        if (j + 1 == n) break;
        pivot = diag[j + 1] - lower[j + 1] * cp[j];
    }
    out[n - 1] = dp[n - 1];
    for (std::size_t j = n - 1; j-- > 0;) out[j] = dp[j] - cp[j] * out[j + 1];
}

} // namespace

void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                       std::span<const double> upper, std::span<const double> rhs,
                       std::span<double> solution, const SchemeConfig& cfg, StepStats* stats) {
    const std::size_t n = diag.size();
    thomas(lower, diag, upper, rhs, solution);

    double scale = 0.0;
    for (double r : rhs) scale = std::max(scale, std::abs(r));
    const double target = cfg.linear_tol * (1.0 + scale);

    std::vector<double> residual(n), correction(n);
    auto residual_norm = [&] {
        double worst = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double ax = diag[j] * solution[j];
            if (j > 0) ax += lower[j] * solution[j - 1];
            if (j + 1 < n) ax += upper[j] * solution[j + 1];
            residual[j] = rhs[j] - ax;
            worst = std::max(worst, std::abs(residual[j]));
        }
        return worst;
    };

    double res = residual_norm();
    int iters = 0;
    while (!(res <= target) && iters < cfg.max_linear_iters) {
        thomas(lower, diag, upper, residual, correction);
        for (std::size_t j = 0; j < n; ++j) solution[j] += correction[j];
        res = residual_norm();
        ++iters;
    }
    if (stats) {
        stats->refinement_iters = std::max(stats->refinement_iters, iters);
        stats->linear_residual = std::max(stats->linear_residual, res);
    }
    if (!(res <= target)) {
        std::ostringstream msg;
        msg << "tridiagonal solve did not reach linear_tol: residual " << res << " after "
            << iters << " refinement sweeps";
        throw NumericalError(msg.str());
    }
}

double monotone_dt_limit(const Model& model, const Grid& grid) {
    double limit = std::numeric_limits<double>::infinity();
    const double h = grid.h;
    for (double t : grid.t_nodes)
        for (double x : grid.x_nodes)
            for (double c : grid.c_nodes) {
                const double sig = model.coef.sigma(t, x, c);
                const double b = model.coef.b(t, x, c);
                const double denom = sig * sig + h * std::abs(b);
                if (denom > 0.0) limit = std::min(limit, h * h / denom);
            }
    return limit;
}

void check_cfl(const Model& model, const Grid& grid, const SchemeConfig& cfg) {
    if (cfg.theta >= 1.0) return;
    const double limit = monotone_dt_limit(model, grid);
    const double explicit_dt = (1.0 - cfg.theta) * grid.dt;
    if (explicit_dt > limit) {
        std::ostringstream msg;
        msg << "explicit step violates the monotonicity bound: (1 - theta) dt = " << explicit_dt
            << " > h^2 / (max sigma^2 + h max|b|) = " << limit;
        throw NumericalError(msg.str());
    }
}

std::vector<double> theta_step(const Model& model, const Grid& grid, std::size_t i, double c,
                               std::span<const double> next, const SchemeConfig& cfg,
                               StepStats* stats) {
    const std::size_t n = grid.n_x();
    const double dt = grid.dt;
    const double theta = cfg.theta;
    const double t_now = grid.t_nodes[i];
    const double t_next = grid.t_nodes[i + 1];

    std::vector<double> rhs(next.begin(), next.end());
    if (theta < 1.0) {
        const Stencil ex = build_stencil(model, grid, t_next, c);
        for (std::size_t j = 0; j < n; ++j) {
            double lv = ex.diag[j] * next[j];
            if (j > 0) lv += ex.lower[j] * next[j - 1];
            if (j + 1 < n) lv += ex.upper[j] * next[j + 1];
            rhs[j] += (1.0 - theta) * dt * (lv + model.coef.f(t_next, grid.x_nodes[j], c));
        }
    }
    if (theta > 0.0) {
        for (std::size_t j = 0; j < n; ++j)
            rhs[j] += theta * dt * model.coef.f(t_now, grid.x_nodes[j], c);
    }
    for (double r : rhs)
        if (!std::isfinite(r)) throw ModelError("non-finite value in the backward step");
    if (theta == 0.0) return rhs;

    Stencil im = build_stencil(model, grid, t_now, c);
    for (std::size_t j = 0; j < n; ++j) {
        im.lower[j] *= -theta * dt;
        im.upper[j] *= -theta * dt;
        im.diag[j] = 1.0 - theta * dt * im.diag[j];
    }
    std::vector<double> out(n);
    solve_tridiagonal(im.lower, im.diag, im.upper, rhs, out, cfg, stats);
    return out;
}

} // namespace ratchet
