#include "ratchet/viscosity_lab.hpp"

#include "ratchet/errors.hpp"
#include "ratchet/hjb_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ratchet {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_gamma(double gamma) {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in (0, 1]");
}

struct Axis {
    std::size_t count;
    std::size_t stride;
    double spacing;
};

std::array<Axis, 3> axes(const Grid& g) {
    return {Axis{g.n_t(), g.n_x() * g.n_c(), g.dt}, Axis{g.n_x(), g.n_c(), g.h},
            Axis{g.n_c(), 1, g.dc}};
}

// One exhaustive 1-D sup-convolution pass along `axis` for every line.
void sup_pass(const Grid& g, const Axis& axis, double gamma, const std::vector<double>& in,
              std::vector<double>& out, std::vector<std::size_t>& arg) {
    const double inv = 1.0 / (2.0 * gamma * gamma);
    std::vector<double> pen(axis.count);
    for (std::size_t d = 0; d < axis.count; ++d) {
        const double dist = static_cast<double>(d) * axis.spacing;
        pen[d] = dist * dist * inv;
    }
    out.resize(in.size());
    arg.resize(in.size());
    const std::size_t lines = g.size() / axis.count;
    std::vector<double> line(axis.count);
    for (std::size_t l = 0; l < lines; ++l) {
        // Base offset of line l: enumerate indices with the axis coordinate zeroed.
        const std::size_t outer = l / axis.stride;
        const std::size_t inner = l % axis.stride;
        const std::size_t base = outer * axis.stride * axis.count + inner;
        double line_max = -std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < axis.count; ++m) {
            line[m] = in[base + m * axis.stride];
            line_max = std::max(line_max, line[m]);
        }
        for (std::size_t m = 0; m < axis.count; ++m) {
            const double reach = std::sqrt(2.0 * gamma * gamma * (line_max - line[m]));
            const auto span = static_cast<std::size_t>(std::min<double>(
                static_cast<double>(axis.count), std::floor(reach / axis.spacing) + 1.0));
            const std::size_t lo = m >= span ? m - span : 0;
            const std::size_t hi = std::min(axis.count - 1, m + span);
            double best = line[m];
            std::size_t best_m = m;
            for (std::size_t q = lo; q <= hi; ++q) {
                const double cand = line[q] - pen[q > m ? q - m : m - q];
                if (cand > best) {
                    best = cand;
                    best_m = q;
                }
            }
            out[base + m * axis.stride] = best;
            arg[base + m * axis.stride] = best_m;
        }
    }
}

ConvolutionField sup_envelope(const Grid& g, std::vector<double> values, double gamma) {
    const auto ax = axes(g);
    std::vector<double> pass_c, pass_x, pass_t;
    std::vector<std::size_t> arg_c, arg_x, arg_t;
    sup_pass(g, ax[2], gamma, values, pass_c, arg_c);
    sup_pass(g, ax[1], gamma, pass_c, pass_x, arg_x);
    sup_pass(g, ax[0], gamma, pass_x, pass_t, arg_t);

    ConvolutionField out{g, std::move(pass_t), gamma, EnvelopeKind::Sup, std::vector<std::size_t>(g.size())};
    for (std::size_t i = 0; i < g.n_t(); ++i)
        for (std::size_t j = 0; j < g.n_x(); ++j)
            for (std::size_t k = 0; k < g.n_c(); ++k) {
                const std::size_t ti = arg_t[g.index(i, j, k)];
                const std::size_t xj = arg_x[g.index(ti, j, k)];
                const std::size_t ck = arg_c[g.index(ti, xj, k)];
                out.argmax[g.index(i, j, k)] = g.index(ti, xj, ck);
            }
    return out;
}

} // namespace

ConvolutionField sup_convolution(const ValueField& source, double gamma) {
    require_gamma(gamma);
    const auto v = source.values();
    return sup_envelope(source.grid(), std::vector<double>(v.begin(), v.end()), gamma);
}

ConvolutionField inf_convolution(const ValueField& source, double gamma) {
    require_gamma(gamma);
    std::vector<double> neg(source.values().begin(), source.values().end());
    for (double& v : neg) v = -v;
    auto out = sup_envelope(source.grid(), std::move(neg), gamma);
    for (double& v : out.values) v = -v;
    out.kind = EnvelopeKind::Inf;
    return out;
}

double semiconvexity_check(const ConvolutionField& field) {
    const Grid& g = field.grid;
    const double sign = field.kind == EnvelopeKind::Sup ? 1.0 : -1.0;
    const double inv = 1.0 / (field.gamma * field.gamma);
    const auto ax = axes(g);
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < g.size(); ++n) {
        const std::size_t coord[3] = {n / ax[0].stride, (n / ax[1].stride) % g.n_x(), n % g.n_c()};
        for (int a = 0; a < 3; ++a) {
            const Axis& axis = ax[static_cast<std::size_t>(a)];
            const std::size_t c = coord[a];
            if (c == 0 || c + 1 >= axis.count) continue;
            const double d2 = field.values[n + axis.stride] + field.values[n - axis.stride] -
                              2.0 * field.values[n];
            worst = std::max(worst, -(sign * d2 + axis.spacing * axis.spacing * inv));
        }
    }
    return worst;
}

double sandwich_rate(double kappa_prime) { return 2.0 * kappa_prime / (2.0 - kappa_prime); }

SandwichFit sandwich_scaling(const ValueField& source, const std::vector<double>& gammas,
                             double kappa_prime) {
    if (gammas.size() < 3) throw ConfigError("sandwich_scaling needs at least 3 gamma values");
    const Grid& g = source.grid();
    const double power = 2.0 / (2.0 - kappa_prime);
    double scale = 0.0;
    for (double v : source.values()) scale = std::max(scale, std::abs(v));
    const double floor = 1e-12 * (1.0 + scale);

    SandwichFit fit;
    fit.gammas = gammas;
    std::vector<double> lx, ly;
    for (double gamma : gammas) {
        const auto up = sup_convolution(source, gamma);
        const auto down = inf_convolution(source, gamma);
        double gap = 0.0;
        for (std::size_t i = 0; i < g.n_t(); ++i)
            for (std::size_t j = 0; j < g.n_x(); ++j) {
                if (!g.reporting(j)) continue;
                const double w = std::pow(1.0 + std::abs(g.x_nodes[j]), power);
                for (std::size_t k = 0; k < g.n_c(); ++k) {
                    const std::size_t n = g.index(i, j, k);
                    gap = std::max(gap, (up.values[n] - down.values[n]) / w);
                }
            }
        fit.gaps.push_back(gap);
        if (gap > floor) {
            lx.push_back(std::log(gamma));
            ly.push_back(std::log(gap));
        }
    }
    if (lx.size() >= 2) {
        const double n = static_cast<double>(lx.size());
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        for (std::size_t q = 0; q < lx.size(); ++q) {
            sx += lx[q];
            sy += ly[q];
            sxx += lx[q] * lx[q];
            sxy += lx[q] * ly[q];
        }
        const double denom = n * sxx - sx * sx;
        if (denom > 0.0) fit.slope = (n * sxy - sx * sy) / denom;
    }
    return fit;
}

double neighborhood_radius_sq(double gamma, double K, double kappa_prime, double x) {
    return 2.0 * gamma * gamma * K * std::pow(gamma, sandwich_rate(kappa_prime)) *
           std::pow(1.0 + std::abs(x), 2.0 / (2.0 - kappa_prime));
}

NeighborhoodResult neighborhood_operators(const ValueField& field, NodeIndex node, double gamma,
                                          double p, double P, const Model& model,
                                          const RegularityConstants& reg, double K) {
    require_gamma(gamma);
    const Grid& g = field.grid();
    if (node.i >= g.n_t() || node.j >= g.n_x() || node.k >= g.n_c())
        throw ConfigError("neighborhood node outside the grid");
    const double r2 = neighborhood_radius_sq(gamma, K, reg.kappa_prime(), g.x_nodes[node.j]);
    const double r = std::sqrt(r2);

    auto window = [&](std::size_t center, std::size_t count, double spacing) {
        const auto span = static_cast<std::size_t>(
            std::min<double>(static_cast<double>(count), std::floor(r / spacing)));
        return std::pair<std::size_t, std::size_t>{center >= span ? center - span : 0,
                                                   std::min(count - 1, center + span)};
    };
    const auto [i0, i1] = window(node.i, g.n_t(), g.dt);
    const auto [j0, j1] = window(node.j, g.n_x(), g.h);
    const auto [k0, k1] = window(node.k, g.n_c(), g.dc);

    NeighborhoodResult res;
    res.L_sup = std::numeric_limits<double>::infinity();
    res.L_inf = -std::numeric_limits<double>::infinity();
    for (std::size_t i = i0; i <= i1; ++i)
        for (std::size_t j = j0; j <= j1; ++j)
            for (std::size_t k = k0; k <= k1; ++k) {
                const double dt = (static_cast<double>(i) - static_cast<double>(node.i)) * g.dt;
                const double dx = (static_cast<double>(j) - static_cast<double>(node.j)) * g.h;
                const double dc = (static_cast<double>(k) - static_cast<double>(node.k)) * g.dc;
                if (dt * dt + dx * dx + dc * dc > r2) continue;
                const double G = hamiltonian_G({g.t_nodes[i], g.x_nodes[j], g.c_nodes[k], p, P}, model);
                res.L_sup = std::min(res.L_sup, G);
                res.L_inf = std::max(res.L_inf, G);
                ++res.nodes;
            }
    res.center_only = res.nodes == 1;
    return res;
}

ResidualReport residual_check(const ValueField& field, const Model& model) {
    const Grid& g = field.grid();
    ResidualReport rep;
    rep.r1.assign(g.size(), kNaN);
    rep.r2.assign(g.size(), kNaN);
    rep.max_r1 = -std::numeric_limits<double>::infinity();
    rep.max_r2 = -std::numeric_limits<double>::infinity();
    rep.min_combined = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < g.n_t(); ++i)
        for (std::size_t j = 1; j + 1 < g.n_x(); ++j)
            for (std::size_t k = 0; k + 1 < g.n_c(); ++k) {
                const double t = g.t_nodes[i], x = g.x_nodes[j], c = g.c_nodes[k];
                const double v = field.at(i, j, k);
                const double vt = (field.at(i + 1, j, k) - v) / g.dt;
                const double b = model.coef.b(t, x, c);
                const double vx = b >= 0.0 ? (field.at(i, j + 1, k) - v) / g.h
                                           : (v - field.at(i, j - 1, k)) / g.h;
                const double vxx =
                    (field.at(i, j + 1, k) - 2.0 * v + field.at(i, j - 1, k)) / (g.h * g.h);
                const double vc = (field.at(i, j, k + 1) - v) / g.dc;
                const double r1 = -vt + hamiltonian_G({t, x, c, -vx, -vxx}, model);
                const double r2 = -vc;
                const std::size_t n = g.index(i, j, k);
                rep.r1[n] = r1;
                rep.r2[n] = r2;
                rep.max_r1 = std::max(rep.max_r1, r1);
                rep.max_r2 = std::max(rep.max_r2, r2);
                const double combined = std::max(r1, r2);
                rep.min_combined = std::min(rep.min_combined, combined);
                rep.max_combined = std::max(rep.max_combined, std::abs(combined));
                ++rep.interior_nodes;
            }
    return rep;
}

double EstimateReport::combined_K() const noexcept {
    return std::max({growth_K, time_holder_K, c_holder_K});
}

namespace {

// Visits (|dV|, rhs) for each estimate family over axis-aligned reporting pairs.
template <typename Visit>
void scan_pairs(const ValueField& f, double kappa, Visit&& visit) {
    const Grid& g = f.grid();
    std::vector<std::size_t> rep;
    for (std::size_t j = 0; j < g.n_x(); ++j)
        if (g.reporting(j)) rep.push_back(j);
    for (std::size_t j : rep) {
        const double ax = std::abs(g.x_nodes[j]);
        for (std::size_t k = 0; k < g.n_c(); ++k)
            for (std::size_t i = 0; i < g.n_t(); ++i) {
                const double v = f.at(i, j, k);
                visit(0, std::abs(v), 1.0 + ax);
                for (std::size_t i2 = i + 1; i2 < g.n_t(); ++i2)
                    visit(1, std::abs(f.at(i2, j, k) - v),
                          (1.0 + 2.0 * ax) * std::sqrt(g.t_nodes[i2] - g.t_nodes[i]));
                for (std::size_t k2 = k + 1; k2 < g.n_c(); ++k2)
                    visit(2, std::abs(f.at(i, j, k2) - v),
                          (1.0 + ax) * std::pow(g.c_nodes[k2] - g.c_nodes[k], kappa));
            }
    }
    for (std::size_t i = 0; i < g.n_t(); ++i)
        for (std::size_t k = 0; k < g.n_c(); ++k)
            for (std::size_t a = 0; a < rep.size(); ++a)
                for (std::size_t b = a + 1; b < rep.size(); ++b) {
                    const std::size_t ja = rep[a], jb = rep[b];
                    visit(1, std::abs(f.at(i, jb, k) - f.at(i, ja, k)),
                          std::abs(g.x_nodes[jb] - g.x_nodes[ja]));
                }
}

} // namespace

EstimateReport estimate_fit(const ValueField& field, const RegularityConstants& reg,
                            double ceiling) {
    std::array<double, 3> K{0.0, 0.0, 0.0};
    scan_pairs(field, reg.holder_kappa(), [&](int fam, double lhs, double rhs) {
        if (rhs > 0.0) K[static_cast<std::size_t>(fam)] = std::max(K[static_cast<std::size_t>(fam)], lhs / rhs);
    });
    EstimateReport rep{K[0], K[1], K[2], -std::numeric_limits<double>::infinity(), false};
    scan_pairs(field, reg.holder_kappa(), [&](int fam, double lhs, double rhs) {
        rep.max_violation = std::max(rep.max_violation, lhs - K[static_cast<std::size_t>(fam)] * rhs);
    });
    rep.exceeds_ceiling = rep.combined_K() > ceiling;
    return rep;
}

} // namespace ratchet
