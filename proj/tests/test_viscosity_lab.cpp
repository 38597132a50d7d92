#include "ratchet/errors.hpp"
#include "ratchet/hjb_solver.hpp"
#include "ratchet/viscosity_lab.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include "doctest.h"

using namespace ratchet;

namespace {

ValueField field_of(const Grid& g, const std::function<double(double, double, double)>& fn) {
    ValueField v(g);
    for (std::size_t i = 0; i < g.n_t(); ++i)
        for (std::size_t j = 0; j < g.n_x(); ++j)
            for (std::size_t k = 0; k < g.n_c(); ++k) v.at(i, j, k) = fn(g.t_nodes[i], g.x_nodes[j], g.c_nodes[k]);
    return v;
}

double sq_dist(const Grid& g, std::size_t a, std::size_t b) {
    const std::size_t nxc = g.n_x() * g.n_c();
    const double dt = g.t_nodes[a / nxc] - g.t_nodes[b / nxc];
    const double dx = g.x_nodes[(a / g.n_c()) % g.n_x()] - g.x_nodes[(b / g.n_c()) % g.n_x()];
    const double dc = g.c_nodes[a % g.n_c()] - g.c_nodes[b % g.n_c()];
    return dt * dt + dx * dx + dc * dc;
}

// Exhaustive search over every pair of grid nodes.
std::vector<double> brute_envelope(const ValueField& v, double gamma, EnvelopeKind kind) {
    const Grid& g = v.grid();
    std::vector<double> out(g.size());
    const double sign = kind == EnvelopeKind::Sup ? 1.0 : -1.0;
    for (std::size_t n = 0; n < g.size(); ++n) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t m = 0; m < g.size(); ++m)
            best = std::max(best, sign * v.values()[m] - sq_dist(g, n, m) / (2.0 * gamma * gamma));
        out[n] = sign * best;
    }
    return out;
}

Grid small_grid() {
    ProblemSpec spec;
    return make_grid(spec, 5, 8, 4, 2.0);
}

} // namespace

TEST_CASE("envelopes of a constant field") {
    const Grid g = small_grid();
    const ValueField v(g, 7.0);
    const ConvolutionField up = sup_convolution(v, 0.5);
    const ConvolutionField lo = inf_convolution(v, 0.5);
    for (std::size_t n = 0; n < g.size(); ++n) {
        CHECK(up.values[n] == 7.0);
        CHECK(lo.values[n] == 7.0);
        CHECK(up.argmax[n] == n);
    }
    CHECK(semiconvexity_check(up) <= 0.0);
    CHECK(semiconvexity_check(lo) <= 0.0);
    CHECK_THROWS_AS(sup_convolution(v, 0.0), ConfigError);
    CHECK_THROWS_AS(inf_convolution(v, 1.5), ConfigError);
}

TEST_CASE("separable envelopes match the exhaustive search") {
    const Grid g = small_grid();
    const std::function<double(double, double, double)> sources[] = {
        [](double t, double x, double c) { return std::sin(3 * x) + t * c - 0.5 * std::abs(x - c); },
        [](double t, double x, double c) { return -x * x + 2 * t - c; },
        [](double, double x, double c) { return std::floor(2 * x) * c; },
    };
    for (const auto& fn : sources) {
        const ValueField v = field_of(g, fn);
        for (double gamma : {1.0, 0.5, 0.25, 0.125}) {
            const auto up = sup_convolution(v, gamma);
            const auto lo = inf_convolution(v, gamma);
            const auto up_ref = brute_envelope(v, gamma, EnvelopeKind::Sup);
            const auto lo_ref = brute_envelope(v, gamma, EnvelopeKind::Inf);
            for (std::size_t n = 0; n < g.size(); ++n) {
                CHECK(up.values[n] == doctest::Approx(up_ref[n]).epsilon(1e-13));
                CHECK(lo.values[n] == doctest::Approx(lo_ref[n]).epsilon(1e-13));
                // The recorded optimizer attains the envelope value.
                const std::size_t m = up.argmax[n];
                CHECK(v.values()[m] - sq_dist(g, n, m) / (2 * gamma * gamma) ==
                      doctest::Approx(up.values[n]).epsilon(1e-13));
            }
        }
    }
}

TEST_CASE("envelopes of simple profiles") {
    ProblemSpec spec;
    spec.horizon = 2.0;
    spec.c_upper = 3.0;
    const Grid unit = make_grid(spec, 3, 6, 3, 3.0); // spacing 1 in x
    const ValueField linear = field_of(unit, [](double, double x, double) { return x; });
    const auto up = sup_convolution(linear, 0.1);
    for (std::size_t n = 0; n < unit.size(); ++n) CHECK(std::abs(up.values[n] - linear.values()[n]) <= 0.005);

    ProblemSpec s2;
    const Grid fine = make_grid(s2, 4, 20, 4, 1.0);
    const ValueField bump = field_of(fine, [](double, double x, double) { return -x * x; });
    const auto upb = sup_convolution(bump, 0.5);
    const std::size_t mid = fine.index(2, 10, 1);
    REQUIRE(fine.x_nodes[10] == 0.0);
    CHECK(upb.values[mid] == 0.0);
    CHECK(upb.argmax[mid] == mid);

    const ValueField bowl = field_of(fine, [](double, double x, double) { return x * x; });
    const auto lob = inf_convolution(bowl, 0.5);
    CHECK(lob.values[mid] == 0.0);
}

TEST_CASE("envelope ordering and monotonicity in gamma") {
    const Model m = build_model({"TRACKING", {}});
    const Grid g = make_grid(m.spec, 20, 40, 8, 4.0);
    const ValueField v = solve_backward(m, g, SchemeConfig{}).value;
    std::vector<double> prev_up, prev_lo;
    for (double gamma : {0.125, 0.25, 0.5, 1.0}) {
        const auto up = sup_convolution(v, gamma);
        const auto lo = inf_convolution(v, gamma);
        for (std::size_t n = 0; n < g.size(); ++n) {
            CHECK(lo.values[n] <= v.values()[n]);
            CHECK(v.values()[n] <= up.values[n]);
            if (!prev_up.empty()) {
                CHECK(prev_up[n] <= up.values[n]);
                CHECK(prev_lo[n] >= lo.values[n]);
            }
        }
        CHECK(semiconvexity_check(up) <= 1e-9);
        CHECK(semiconvexity_check(lo) <= 1e-9);
        prev_up = up.values;
        prev_lo = lo.values;
    }
}

TEST_CASE("semiconvexity check detects injected corruption") {
    const Model m = build_model({"TRACKING", {}});
    const Grid g = make_grid(m.spec, 20, 40, 8, 4.0);
    const ValueField v = solve_backward(m, g, SchemeConfig{}).value;
    const double gamma = 0.5;
    const auto up = sup_convolution(v, gamma);
    const auto lo = inf_convolution(v, gamma);
    const double spacing = std::max({g.dt, g.h, g.dc});
    for (std::size_t node : {g.index(5, 20, 3), g.index(10, 12, 6), g.index(1, 30, 1)}) {
        auto bad = up;
        bad.values[node] -= 1.0;
        CHECK(semiconvexity_check(bad) > 0.0);
        bad = up;
        bad.values[node] -= 10.0 * spacing * spacing;
        CHECK(semiconvexity_check(bad) > 0.0);
        auto bad_lo = lo;
        bad_lo.values[node] += 10.0 * spacing * spacing;
        CHECK(semiconvexity_check(bad_lo) > 0.0);
    }
}

TEST_CASE("sandwich scaling") {
    ProblemSpec spec;
    const Grid g = make_grid(spec, 10, 40, 10, 4.0);
    const ValueField constant(g, 3.0);
    const auto c = sandwich_scaling(constant, {0.5, 0.25, 0.125}, 0.5);
    CHECK_FALSE(c.slope.has_value());
    for (double d : c.gaps) CHECK(d == 0.0);

    // Grid spacing 0.02 resolves the touching offsets gamma^2 exactly.
    const Grid fine = make_grid(spec, 10, 400, 10, 4.0);
    const ValueField affine = field_of(fine, [](double, double x, double) { return x; });
    const auto a = sandwich_scaling(affine, {0.8, 0.4, 0.2}, 0.5);
    REQUIRE(a.slope.has_value());
    CHECK(*a.slope >= 1.8);

    const Model m = build_model({"TRACKING", {}});
    const ValueField v = solve_backward(m, make_grid(m.spec, 40, 80, 10, 6.0), SchemeConfig{}).value;
    const auto reg = estimate_regularity(m, 1000);
    CHECK(reg.kappa_prime() == 0.5);
    const auto t = sandwich_scaling(v, {0.5, 0.25, 0.125}, reg.kappa_prime());
    REQUIRE(t.slope.has_value());
    CHECK(*t.slope >= sandwich_rate(0.5) - 0.2);
    CHECK(sandwich_rate(0.5) == doctest::Approx(2.0 / 3.0));

    CHECK_THROWS_AS(sandwich_scaling(v, {0.5, 0.25}, 0.5), ConfigError);
}

TEST_CASE("optimizer distances stay inside the doubled estimate ball") {
    const Model m = build_model({"TRACKING", {}});
    const Grid g = make_grid(m.spec, 20, 40, 8, 4.0);
    const ValueField v = solve_backward(m, g, SchemeConfig{}).value;
    const auto reg = estimate_regularity(m, 1000);
    const double K = estimate_fit(v, reg).combined_K();
    for (double gamma : {0.5, 0.25, 0.125}) {
        const auto up = sup_convolution(v, gamma);
        for (std::size_t i = 0; i < g.n_t(); ++i)
            for (std::size_t j = 0; j < g.n_x(); ++j) {
                if (!g.reporting(j)) continue;
                for (std::size_t k = 0; k < g.n_c(); ++k) {
                    const std::size_t n = g.index(i, j, k);
                    CHECK(sq_dist(g, n, up.argmax[n]) <=
                          neighborhood_radius_sq(gamma, 2.0 * K, reg.kappa_prime(), g.x_nodes[j]));
                }
            }
    }
}

TEST_CASE("neighborhood operators") {
    ProblemSpec spec;
    const Grid g = make_grid(spec, 10, 20, 10, 2.0);
    const NodeIndex node{4, 10, 5};

    const Model constant = build_model({"CONSTANT", {}});
    const ValueField vc(g, 0.0);
    const auto rc = neighborhood_operators(vc, node, 0.5, 1.0, 2.0, constant, RegularityConstants(1.0, 1.0), 1.0);
    CHECK(rc.L_sup == 0.0);
    CHECK(rc.L_inf == 0.0);

    const Model linear = build_model({"LINEAR_RATE", {}});
    const double c = g.c_nodes[node.k];
    const RegularityConstants reg(1.0, 1.0);
    // Radius just above one c-spacing at x = 0.
    const double target = 1.01 * g.dc;
    const double r1 = neighborhood_radius_sq(0.5, 1.0, 0.5, 0.0);
    const double K = target * target / r1;
    const auto rl = neighborhood_operators(vc, node, 0.5, 0.0, 0.0, linear, reg, K);
    CHECK(rl.L_inf - rl.L_sup == doctest::Approx(2.0 * g.dc));
    CHECK(rl.L_inf == doctest::Approx(-(c - g.dc)));

    const Model tracking = build_model({"TRACKING", {}});
    for (std::size_t j : {3u, 10u, 16u})
        for (double gamma : {1.0, 0.5, 0.1}) {
            const NodeIndex n{2, j, 4};
            const auto r = neighborhood_operators(vc, n, gamma, 0.3, -1.2, tracking, reg, 2.0);
            const double center = hamiltonian_G({g.t_nodes[2], g.x_nodes[j], g.c_nodes[4], 0.3, -1.2}, tracking);
            CHECK(r.L_sup <= center);
            CHECK(center <= r.L_inf);
            CHECK(r.nodes >= 1);
        }
    const auto tiny = neighborhood_operators(vc, node, 1e-3, 0.0, 0.0, linear, reg, 1.0);
    CHECK(tiny.center_only);
    CHECK(tiny.nodes == 1);
    CHECK(tiny.L_sup == tiny.L_inf);
}

TEST_CASE("residuals of closed-form fields") {
    ProblemSpec spec;
    const Grid g = make_grid(spec, 10, 20, 5, 2.0);

    const Model linear = build_model({"LINEAR_RATE", {}});
    const ValueField lin = field_of(g, [](double t, double, double c) { return c * (1.0 - t); });
    const auto rl = residual_check(lin, linear);
    CHECK(rl.interior_nodes == 10 * 19 * 4);
    CHECK(rl.max_combined <= 1e-12);
    for (std::size_t i = 0; i + 1 < g.n_t(); ++i)
        for (std::size_t j = 1; j + 1 < g.n_x(); ++j)
            for (std::size_t k = 0; k + 1 < g.n_c(); ++k) {
                const std::size_t n = g.index(i, j, k);
                CHECK(std::abs(rl.r1[n]) <= 1e-12);
                CHECK(rl.r2[n] == doctest::Approx(-(1.0 - g.t_nodes[i])));
            }
    CHECK(std::isnan(rl.r1[g.index(g.n_t() - 1, 3, 1)]));

    const Model constant = build_model({"CONSTANT", {}});
    const ValueField con = field_of(g, [](double, double x, double) { return x; });
    const auto rc = residual_check(con, constant);
    CHECK(rc.max_r1 == 0.0);
    CHECK(rc.max_r2 == 0.0);
    CHECK(rc.max_combined == 0.0);

    const Model payout = build_model({"PAYOUT", {}});
    const ValueField pay = solve_backward(payout, g, SchemeConfig{}).value;
    const auto rp = residual_check(pay, payout);
    CHECK(std::abs(rp.max_r2) <= 1e-12);
    CHECK(rp.max_r1 <= 1e-12);
    CHECK(rp.max_combined <= 1e-12);
}

TEST_CASE("residual of the TRACKING solve is small and consistent") {
    const Model m = build_model({"TRACKING", {}});
    double C[2];
    for (int l = 0; l < 2; ++l) {
        const Grid g = make_grid(m.spec, 40 << l, 80 << l, 10 << l, 6.0);
        const auto rr = residual_check(solve_backward(m, g, SchemeConfig{}).value, m);
        CHECK(rr.min_combined >= -1e-9);
        CHECK(rr.max_r2 <= 1e-12);
        C[l] = rr.max_combined / (g.h + g.dt + g.dc);
    }
    CHECK(C[1] / C[0] >= 0.5);
    CHECK(C[1] / C[0] <= 2.0);
}

TEST_CASE("estimate fit on closed-form fields") {
    ProblemSpec spec;
    const Grid g = make_grid(spec, 16, 20, 8, 2.0);
    const RegularityConstants kappa1(1.0, 1.0);

    const ValueField lin = field_of(g, [](double t, double, double c) { return c * (1.0 - t); });
    const auto rl = estimate_fit(lin, kappa1);
    CHECK(rl.c_holder_K <= 1.0 + 1e-12);
    CHECK(rl.max_violation <= 0.0);
    CHECK_FALSE(rl.exceeds_ceiling);

    const ValueField con = field_of(g, [](double, double x, double) { return x; });
    const auto rc = estimate_fit(con, kappa1);
    CHECK(rc.time_holder_K <= 1.0 + 1e-12);
    CHECK(rc.growth_K <= 1.0 + 1e-12);

    const ValueField pay = field_of(g, [](double t, double, double) { return -(1.0 - t); });
    const auto rp = estimate_fit(pay, kappa1);
    CHECK(rp.c_holder_K <= 1e-12);

    const ValueField wild = field_of(g, [](double, double x, double c) { return 1e9 * x * c; });
    CHECK(estimate_fit(wild, kappa1, 1e6).exceeds_ceiling);
}
