#include "ratchet/hjb_solver.hpp"

#include "ratchet/errors.hpp"
#include "ratchet/parallel.hpp"

#include <algorithm>
#include <chrono>
#include <charconv>
#include <cmath>
#include <ostream>

namespace ratchet {

double hamiltonian_G(const HamiltonianInput& in, const Model& model) {
    const double sig = model.coef.sigma(in.t, in.x, in.c);
    const double b = model.coef.b(in.t, in.x, in.c);
    const double f = model.coef.f(in.t, in.x, in.c);
    const double g = 0.5 * in.P * sig * sig + b * in.p - f;
    if (!std::isfinite(g)) throw ModelError("non-finite Hamiltonian");
    return g;
}

std::vector<double> pde_step(const Model& model, const Grid& grid, std::span<const double> next,
                             std::size_t i, std::size_t k_c, const SchemeConfig& cfg,
                             StepStats* stats) {
    return theta_step(model, grid, i, grid.c_nodes[k_c], next, cfg, stats);
}

void ratchet_project(std::span<double> c_line, std::span<std::size_t> argmin) {
    if (c_line.empty()) return;
    const std::size_t last = c_line.size() - 1;
    double best = c_line[last];
    std::size_t arg = last;
    if (!argmin.empty()) argmin[last] = last;
    for (std::size_t k = last; k-- > 0;) {
        if (c_line[k] <= best) {
            best = c_line[k];
            arg = k;
        }
        c_line[k] = best;
        if (!argmin.empty()) argmin[k] = arg;
    }
}

void ratchet_project_level(std::span<double> level, std::size_t n_c) {
    for (std::size_t off = 0; off + n_c <= level.size(); off += n_c)
        ratchet_project(level.subspan(off, n_c));
}

PolicyField::PolicyField(Grid grid)
    : grid_(std::move(grid)), region_(grid_.size(), Region::Continue), target_(grid_.size(), 0) {}

SolveResult solve_backward(const Model& model, const Grid& grid, const SchemeConfig& cfg,
                           int threads) {
    const auto start = std::chrono::steady_clock::now();
    cfg.validate();
    check_cfl(model, grid, cfg);

    const std::size_t nt = grid.n_t();
    const std::size_t nx = grid.n_x();
    const std::size_t nc = grid.n_c();
    const std::size_t last_c = nc - 1;

    SolveResult res{ValueField(grid), PolicyField(grid), solve_boundary_G(model, grid, cfg), {}};
    ValueField& v = res.value;
    fill_terminal(v, model);
    for (std::size_t j = 0; j < nx; ++j) v.at(nt - 1, j, last_c) = res.boundary_G[(nt - 1) * nx + j];

    std::vector<StepStats> stats(nc);
    std::vector<double> raw(nx * nc);
    std::vector<double> line(nc);
    std::vector<std::size_t> arg(nc);

    for (std::size_t i = nt - 1; i-- > 0;) {
        const auto next = v.level(i + 1);
        parallel_for(last_c, threads, [&](std::size_t k) {
            std::vector<double> slice(nx);
            for (std::size_t j = 0; j < nx; ++j) slice[j] = next[j * nc + k];
            const auto now = pde_step(model, grid, slice, i, k, cfg, &stats[k]);
            for (std::size_t j = 0; j < nx; ++j) raw[j * nc + k] = now[j];
        });
        // c = c_upper is pinned to the boundary solution.
        for (std::size_t j = 0; j < nx; ++j) raw[j * nc + last_c] = res.boundary_G[i * nx + j];

        auto level = v.level(i);
        for (std::size_t j = 0; j < nx; ++j) {
            std::copy_n(raw.begin() + static_cast<std::ptrdiff_t>(j * nc), nc, line.begin());
            ratchet_project(line, arg);
            for (std::size_t k = 0; k < nc; ++k) {
                const double r = raw[j * nc + k];
                level[j * nc + k] = line[k];
                if (r - line[k] > cfg.jump_tol * (1.0 + std::abs(r))) {
                    res.policy.set(i, j, k, Region::Jump, arg[k]);
                    ++res.diagnostics.jump_nodes;
                }
            }
        }
    }
    v.set_stage(Stage::Projected);

    for (const auto& s : stats) {
        res.diagnostics.max_refinement_iters =
            std::max(res.diagnostics.max_refinement_iters, s.refinement_iters);
        res.diagnostics.max_linear_residual =
            std::max(res.diagnostics.max_linear_residual, s.linear_residual);
    }
    res.diagnostics.time_steps = nt - 1;
    res.diagnostics.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

namespace {

std::size_t nearest(const std::vector<double>& nodes, double v, bool& clamped) {
    if (v < nodes.front() - 1e-12 * (1.0 + std::abs(nodes.front())) ||
        v > nodes.back() + 1e-12 * (1.0 + std::abs(nodes.back())))
        clamped = true;
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), v);
    if (it == nodes.begin()) return 0;
    if (it == nodes.end()) return nodes.size() - 1;
    const auto hi = static_cast<std::size_t>(it - nodes.begin());
    return (v - nodes[hi - 1] <= nodes[hi] - v) ? hi - 1 : hi;
}

} // namespace

FeedbackRule::FeedbackRule(PolicyField policy) : policy_(std::move(policy)) {}

FeedbackDecision FeedbackRule::operator()(double t, double x, double c) const {
    const Grid& g = policy_.grid();
    bool clamped = false;
    // Levels at or below c_lower are outside the domain but still map to the first node.
    const std::size_t i = nearest(g.t_nodes, t, clamped);
    const std::size_t j = nearest(g.x_nodes, x, clamped);
    bool c_clamped = false;
    const std::size_t k = nearest(g.c_nodes, c, c_clamped);
    if (c > g.c_upper() + 1e-12 * (1.0 + std::abs(g.c_upper())) || c <= g.c_lower) clamped = true;
    if (policy_.region(i, j, k) == Region::Jump)
        return {std::max(c, g.c_nodes[policy_.jump_target(i, j, k)]), clamped};
    return {c, clamped};
}

FeedbackRule extract_feedback(const PolicyField& policy) { return FeedbackRule(policy); }

void write_policy_csv(std::ostream& out, const PolicyField& policy) {
    const Grid& g = policy.grid();
    char buf[64];
    auto put = [&](double v) {
        const auto r = std::to_chars(buf, buf + sizeof buf, v);
        out.write(buf, r.ptr - buf);
    };
    out << "t,x,c,region,jump_target_c\n";
    for (std::size_t i = 0; i < g.n_t(); ++i)
        for (std::size_t j = 0; j < g.n_x(); ++j)
            for (std::size_t k = 0; k < g.n_c(); ++k) {
                put(g.t_nodes[i]);
                out << ',';
                put(g.x_nodes[j]);
                out << ',';
                put(g.c_nodes[k]);
                if (policy.region(i, j, k) == Region::Jump) {
                    out << ",JUMP,";
                    put(g.c_nodes[policy.jump_target(i, j, k)]);
                } else {
                    out << ",CONTINUE,";
                }
                out << '\n';
            }
}

ConvergenceStudy convergence_study(const Model& model, const std::vector<Grid>& grids,
                                   const SchemeConfig& cfg, int threads) {
    if (grids.size() < 2) throw ConfigError("convergence_study needs at least two grids");
    for (std::size_t l = 1; l < grids.size(); ++l) {
        const Grid& a = grids[l - 1];
        const Grid& b = grids[l];
        const bool nested = b.n_t() == 2 * a.n_t() - 1 && b.n_x() == 2 * a.n_x() - 1 &&
                            b.n_c() == 2 * a.n_c() && a.c_lower == b.c_lower &&
                            a.x_nodes.front() == b.x_nodes.front() &&
                            a.x_nodes.back() == b.x_nodes.back();
        if (!nested) throw ConfigError("convergence_study needs grids refined by a factor of 2");
    }
    const auto start = std::chrono::steady_clock::now();
    std::vector<ValueField> fields;
    fields.reserve(grids.size());
    ConvergenceStudy out;
    for (const Grid& g : grids) {
        fields.push_back(solve_backward(model, g, cfg, threads).value);
        for (double v : fields.back().values()) out.max_abs_value = std::max(out.max_abs_value, std::abs(v));
    }
    for (std::size_t l = 0; l + 1 < fields.size(); ++l) {
        const ValueField& coarse = fields[l];
        const ValueField& fine = fields[l + 1];
        const Grid& g = coarse.grid();
        double diff = 0.0;
        for (std::size_t i = 0; i < g.n_t(); ++i)
            for (std::size_t j = 0; j < g.n_x(); ++j) {
                if (!g.reporting(j)) continue;
                // Coarse c-node k sits at fine index 2k + 1.
                for (std::size_t k = 0; k < g.n_c(); ++k)
                    diff = std::max(diff, std::abs(coarse.at(i, j, k) - fine.at(2 * i, 2 * j, 2 * k + 1)));
            }
        out.sup_diffs.push_back(diff);
    }
    for (std::size_t l = 0; l + 1 < out.sup_diffs.size(); ++l)
        out.orders.push_back(std::log2(out.sup_diffs[l] / out.sup_diffs[l + 1]));
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

} // namespace ratchet
