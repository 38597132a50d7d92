#include "ratchet/counter_rng.hpp"
#include "ratchet/errors.hpp"
#include "ratchet/simulation_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "doctest.h"

using namespace ratchet;

namespace {

Model drift_model(double b, double sigma) {
    Model m = build_model({"CONSTANT", {}});
    m.coef.drift = [b](double, StateView, double, std::span<double> out) { out[0] = b; };
    m.coef.diffusion = [sigma](double, StateView, double, std::span<double> out) { out[0] = sigma; };
    return m;
}

} // namespace

TEST_CASE("counter RNG is stateless and roughly standard normal") {
    const CounterRng rng(42);
    CHECK(rng.bits(1, 2, 3) == CounterRng(42).bits(1, 2, 3));
    CHECK(rng.bits(1, 2, 3) != rng.bits(1, 2, 4));
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int r = 0; r < n; ++r) {
        const double z = rng.normal(7, static_cast<std::uint64_t>(r), 0);
        sum += z;
        sq += z * z;
    }
    CHECK(std::abs(sum / n) <= 4.0 / std::sqrt(n));
    CHECK(std::abs(sq / n - 1.0) <= 0.02);
    for (int r = 0; r < 1000; ++r) {
        const double u = rng.uniform(0, static_cast<std::uint64_t>(r), 0);
        CHECK(u > 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("control path admissibility") {
    CHECK_NOTHROW(ControlPath({0.2, 0.2, 0.5}, 0.2, 1.0));
    CHECK_THROWS_AS(ControlPath({0.5, 0.2}, 0.0, 1.0), AdmissibilityError);
    CHECK_THROWS_AS(ControlPath({0.1, 0.2}, 0.15, 1.0), AdmissibilityError);
    CHECK_THROWS_AS(ControlPath({0.5, 1.5}, 0.0, 1.0), AdmissibilityError);
    CHECK_THROWS_AS(ControlPath({}, 0.0, 1.0), AdmissibilityError);
}

TEST_CASE("simulated paths") {
    const ControlPath u({0.5}, 0.5, 1.0);
    const double x0[] = {0.75};

    const PathSample frozen = simulate_path(drift_model(0.0, 0.0), 0.0, x0, u, 0.1, 1);
    for (std::size_t r = 0; r < frozen.times.size(); ++r) CHECK(frozen.state(r)[0] == 0.75);
    CHECK(frozen.times.back() == 1.0);

    const PathSample drifting = simulate_path(drift_model(1.0, 0.0), 0.0, x0, u, 0.01, 1);
    CHECK(drifting.state(0)[0] == 0.75);
    CHECK(drifting.state(drifting.times.size() - 1)[0] == doctest::Approx(1.75).epsilon(1e-12));

    const PathSample a = simulate_path(drift_model(0.0, 1.0), 0.0, x0, u, 0.01, 9, 3);
    const PathSample b = simulate_path(drift_model(0.0, 1.0), 0.0, x0, u, 0.01, 9, 3);
    CHECK(a.states == b.states);

    const Model bm = drift_model(0.0, 1.0);
    const double origin[] = {0.0};
    const int n = 100000;
    double sum = 0.0;
    for (int p = 0; p < n; ++p) {
        const PathSample s = simulate_path(bm, 0.0, origin, u, 0.25, 5, static_cast<std::uint64_t>(p));
        sum += s.state(s.times.size() - 1)[0];
    }
    CHECK(std::abs(sum / n) <= 3.0 * std::sqrt(1.0 / n));

    CHECK_THROWS_AS(simulate_path(bm, 0.0, origin, u, 0.3, 5), ConfigError);
    CHECK_THROWS_AS(simulate_path(bm, 0.0, origin, u, 0.0, 5), ConfigError);
}

TEST_CASE("blow-up paths are flagged and excluded") {
    Model m = build_model({"CONSTANT", {}});
    m.coef.drift = [](double, StateView x, double, std::span<double> out) { out[0] = x[0] * x[0] * 1e3; };
    const ControlPath u({1.0}, 1.0, 1.0);
    const double x0[] = {10.0};
    const PathSample s = simulate_path(m, 0.0, x0, u, 0.05, 1);
    CHECK_FALSE(s.valid);
    SimulationOptions o;
    o.n_paths = 10;
    o.dt_sim = 0.05;
    CHECK_THROWS_AS(evaluate_cost(m, 0.0, x0, u, o), NumericalError);

    // Cubic drift: paths that wander past the stability threshold blow up, the rest stay finite.
    Model cubic = build_model({"CONSTANT", {}});
    cubic.coef.drift = [](double, StateView x, double, std::span<double> out) { out[0] = 20.0 * x[0] * x[0] * x[0]; };
    cubic.coef.diffusion = [](double, StateView, double, std::span<double> out) { out[0] = 1.0; };
    const double origin[] = {0.0};
    o.n_paths = 2000;
    const CostEstimate mixed = evaluate_cost(cubic, 0.0, origin, u, o);
    CHECK(mixed.n_invalid > 0);
    CHECK(mixed.n_paths > 0);
    CHECK(mixed.n_invalid + mixed.n_paths == 2000);
    CHECK(std::isfinite(mixed.mean));
}

TEST_CASE("cost estimates on closed-form models") {
    SimulationOptions o;
    o.n_paths = 2000;
    o.dt_sim = 0.05;
    const double x0[] = {0.4};

    const CostEstimate lin = evaluate_cost(build_model({"LINEAR_RATE", {}}), 0.2, x0, ControlPath({0.6}, 0.6, 1.0), o);
    CHECK(lin.mean == doctest::Approx(0.6 * 0.8).epsilon(1e-12));
    CHECK(lin.std_error == 0.0);
    CHECK(lin.n_paths == 2000);

    const CostEstimate con = evaluate_cost(build_model({"CONSTANT", {}}), 0.0, x0, ControlPath({0.3}, 0.3, 1.0), o);
    CHECK(std::abs(con.mean - 0.4) <= 3.0 * con.std_error + 1e-15);

    const CostEstimate pay = evaluate_cost(build_model({"PAYOUT", {}}), 0.0, x0, ControlPath({1.0}, 1.0, 1.0), o);
    CHECK(pay.mean == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pay.std_error == 0.0);

    const CostEstimate noisy = evaluate_cost(build_model({"TRACKING", {}}), 0.0, x0, ControlPath({0.5}, 0.5, 1.0), o);
    CHECK(noisy.std_error > 0.0);
}

TEST_CASE("cost estimates do not depend on the thread count") {
    const Model m = build_model({"TRACKING", {}});
    const double x0[] = {0.1};
    const ControlPath u({0.25, 0.75}, 0.25, 1.0);
    SimulationOptions o;
    o.n_paths = 3001;
    o.dt_sim = 0.02;
    const CostEstimate one = evaluate_cost(m, 0.0, x0, u, o);
    o.threads = 3;
    const CostEstimate three = evaluate_cost(m, 0.0, x0, u, o);
    CHECK(one.mean == three.mean);
    CHECK(one.std_error == three.std_error);
}

TEST_CASE("summarize") {
    const std::vector<double> same(5, 2.5);
    const CostEstimate s = summarize(same);
    CHECK(s.mean == 2.5);
    CHECK(s.std_error == 0.0);
    const std::vector<double> mixed{1.0, std::nan(""), 3.0};
    const CostEstimate m = summarize(mixed);
    CHECK(m.mean == 2.0);
    CHECK(m.n_invalid == 1);
    CHECK(m.std_error == doctest::Approx(1.0));
}

TEST_CASE("control enumeration") {
    const double two[] = {0.0, 1.0};
    const auto a = enumerate_controls(two, 2, 0.0, 1.0);
    REQUIRE(a.size() == 3);
    CHECK(a[0].levels() == std::vector<double>{0.0, 0.0});
    CHECK(a[1].levels() == std::vector<double>{0.0, 1.0});
    CHECK(a[2].levels() == std::vector<double>{1.0, 1.0});

    const double three[] = {0.0, 1.0, 2.0};
    CHECK(enumerate_controls(three, 2, 0.0, 2.0).size() == 6);

    const auto c = enumerate_controls(two, 2, 1.0, 1.0);
    REQUIRE(c.size() == 1);
    CHECK(c[0].levels() == std::vector<double>{1.0, 1.0});

    const double many[] = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
    CHECK(count_controls(many, 12, 1.0) == doctest::Approx(293930.0));
    try {
        enumerate_controls(many, 20, 1.0, 10.0);
        FAIL("expected a budget error");
    } catch (const BudgetError& e) {
        CHECK(e.count() == doctest::Approx(10015005.0));
        CHECK(std::string(e.what()).find("10015005") != std::string::npos);
    }
}

TEST_CASE("brute-force values") {
    SimulationOptions o;
    o.n_paths = 500;
    o.dt_sim = 0.05;
    const double x0[] = {0.0};

    const double lin_levels[] = {0.5, 1.0};
    const auto lin = brute_force_value(build_model({"LINEAR_RATE", {}}), 0.0, x0, 0.5, lin_levels, 4, o);
    CHECK(lin.best.mean == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(lin.argmin.levels() == std::vector<double>{0.5, 0.5, 0.5, 0.5});

    const double pay_levels[] = {0.0, 0.5, 1.0};
    const auto pay = brute_force_value(build_model({"PAYOUT", {}}), 0.0, x0, 0.0, pay_levels, 4, o);
    CHECK(pay.best.mean == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pay.argmin.levels() == std::vector<double>{1.0, 1.0, 1.0, 1.0});

    const double x1[] = {0.7};
    const auto con = brute_force_value(build_model({"CONSTANT", {}}), 0.0, x1, 0.0, pay_levels, 2, o);
    CHECK(std::abs(con.best.mean - 0.7) <= 3.0 * con.best.std_error + 1e-12);
}

TEST_CASE("every enumerated control costs at least the brute-force minimum") {
    const Model m = build_model({"TRACKING", {}});
    SimulationOptions o;
    o.n_paths = 2000;
    o.dt_sim = 0.05;
    const double x0[] = {0.3};
    const double levels[] = {0.25, 0.5, 0.75, 1.0};
    const auto bf = brute_force_value(m, 0.0, x0, 0.25, levels, 4, o);
    REQUIRE(bf.controls.size() == 35);
    for (std::size_t q = 0; q < bf.controls.size(); ++q) {
        const CostEstimate c = evaluate_cost(m, 0.0, x0, bf.controls[q], o);
        CHECK(c.mean == bf.costs[q].mean);
        CHECK(c.mean >= bf.best.mean - 3.0 * c.std_error);
    }
}

TEST_CASE("dynamic programming residual") {
    DppConfig cfg;
    cfg.levels = {0.25, 0.5, 0.75, 1.0};
    cfg.n_intervals = 4;
    cfg.sim.n_paths = 2000;
    cfg.sim.dt_sim = 0.05;
    for (const char* name : {"LINEAR_RATE", "PAYOUT"}) {
        const DppResult r = dpp_check(build_model({name, {}}), 0.0, 0.0, 0.25, 0.5, cfg);
        CHECK(r.residual <= 1e-2);
        CHECK(r.first_segment.size() == 2);
    }
    const DppResult c = dpp_check(build_model({"CONSTANT", {}}), 0.0, 0.3, 0.25, 0.5, cfg);
    CHECK(c.residual <= 3.0 * c.combined_std_error + 1e-12);

    // Re-optimizing at t_mid can only help, so the split side is not above the full enumeration.
    cfg.sim.n_paths = 4000;
    const DppResult t = dpp_check(build_model({"TRACKING", {}}), 0.0, 0.0, 0.25, 0.5, cfg);
    CHECK(t.rhs <= t.lhs + 3.0 * t.combined_std_error);

    CHECK_THROWS_AS(dpp_check(build_model({"CONSTANT", {}}), 0.0, 0.0, 0.25, 0.3, cfg), ConfigError);
    CHECK_THROWS_AS(dpp_check(build_model({"CONSTANT", {}}), 0.0, 0.0, 0.25, 1.0, cfg), ConfigError);
}

TEST_CASE("feedback evaluation") {
    SimulationOptions o;
    o.n_paths = 1000;
    o.dt_sim = 0.05;
    const auto stay = [](double, double, double c) { return c; };
    const auto top = [](double, double, double) { return 1.0; };
    CHECK(evaluate_feedback(build_model({"LINEAR_RATE", {}}), 0.0, 0.0, 0.4, stay, o).mean ==
          doctest::Approx(0.4).epsilon(1e-12));
    CHECK(evaluate_feedback(build_model({"PAYOUT", {}}), 0.0, 0.0, 0.4, top, o).mean ==
          doctest::Approx(-1.0).epsilon(1e-12));
    const auto down = [](double, double, double c) { return c - 0.1; };
    CHECK_THROWS_AS(evaluate_feedback(build_model({"PAYOUT", {}}), 0.0, 0.0, 0.4, down, o), AdmissibilityError);
    const auto above = [](double, double, double) { return 2.0; };
    CHECK_THROWS_AS(evaluate_feedback(build_model({"PAYOUT", {}}), 0.0, 0.0, 0.4, above, o), AdmissibilityError);
}

TEST_CASE("state moment bound") {
    const Model m = build_model({"TRACKING", {}});
    const double K = estimate_regularity(m, 500).lipschitz_K();
    const ControlPath u({0.5}, 0.5, 1.0);
    for (double x : {0.0, 2.0, -3.0}) {
        const double x0[] = {x};
        const int n = 4000;
        std::vector<double> mean_abs;
        for (int p = 0; p < n; ++p) {
            const PathSample s = simulate_path(m, 0.0, x0, u, 0.05, 3, static_cast<std::uint64_t>(p));
            if (mean_abs.empty()) mean_abs.assign(s.times.size(), 0.0);
            for (std::size_t r = 0; r < s.times.size(); ++r) mean_abs[r] += std::abs(s.state(r)[0]) / n;
        }
        const double sup = *std::max_element(mean_abs.begin(), mean_abs.end());
        CHECK(sup <= K * std::exp(K * m.spec.horizon) * (1.0 + std::abs(x)));
    }
}
