#include "ratchet/model.hpp"

#include "ratchet/counter_rng.hpp"
#include "ratchet/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

namespace ratchet {

void ProblemSpec::validate() const {
    if (!std::isfinite(horizon) || horizon <= 0.0)
        throw ConfigError("problem.T must be a finite positive number");
    if (!std::isfinite(c_lower) || !std::isfinite(c_upper))
        throw ConfigError("control bounds must be finite");
    if (!(c_lower < c_upper))
        throw ConfigError("problem.c_lower must be strictly less than problem.c_upper");
    if (state_dim < 1) throw ConfigError("state dimension must be at least 1");
    if (noise_dim < 1) throw ConfigError("noise dimension must be at least 1");
}

double CoefficientSet::b(double t, double x, double c) const {
    double out = 0.0;
    drift(t, StateView(&x, 1), c, std::span<double>(&out, 1));
    return out;
}

double CoefficientSet::sigma(double t, double x, double c) const {
    double out = 0.0;
    diffusion(t, StateView(&x, 1), c, std::span<double>(&out, 1));
    return out;
}

double CoefficientSet::f(double t, double x, double c) const {
    return running_cost(t, StateView(&x, 1), c);
}

double CoefficientSet::H(double x) const { return terminal_cost(StateView(&x, 1)); }

namespace {

struct ParamRule {
    const char* key;
    double fallback;
    double lo;
    double hi;
};

struct Builtin {
    const char* name;
    std::vector<ParamRule> rules;
    CoefficientSet (*make)(const std::map<std::string, double>&, const ProblemSpec&);
};

void fill_zero(std::span<double> out) { std::fill(out.begin(), out.end(), 0.0); }

std::function<void(double, StateView, double, std::span<double>)>
scaled_identity_diffusion(double s, int n, int m) {
    return [s, n, m](double, StateView, double, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (int i = 0; i < std::min(n, m); ++i) out[static_cast<std::size_t>(i * m + i)] = s;
    };
}

CoefficientSet make_constant(const std::map<std::string, double>&, const ProblemSpec&) {
    CoefficientSet cs;
    cs.drift = [](double, StateView, double, std::span<double> out) { fill_zero(out); };
    cs.diffusion = [](double, StateView, double, std::span<double> out) { fill_zero(out); };
    cs.running_cost = [](double, StateView, double) { return 0.0; };
    cs.terminal_cost = [](StateView x) {
        double s = 0.0;
        for (double xi : x) s += xi;
        return s;
    };
    return cs;
}

CoefficientSet make_rate(const std::map<std::string, double>& p, const ProblemSpec& spec,
                         double sign) {
    CoefficientSet cs;
    cs.drift = [](double, StateView, double, std::span<double> out) { fill_zero(out); };
    cs.diffusion = scaled_identity_diffusion(p.at("sigma0"), spec.state_dim, spec.noise_dim);
    cs.running_cost = [sign](double, StateView, double c) { return sign * c; };
    cs.terminal_cost = [](StateView) { return 0.0; };
    return cs;
}

CoefficientSet make_linear_rate(const std::map<std::string, double>& p, const ProblemSpec& s) {
    return make_rate(p, s, 1.0);
}

CoefficientSet make_payout(const std::map<std::string, double>& p, const ProblemSpec& s) {
    return make_rate(p, s, -1.0);
}

CoefficientSet make_tracking(const std::map<std::string, double>& p, const ProblemSpec& spec) {
    const double mu0 = p.at("mu0");
    const double weight = p.at("weight");
    CoefficientSet cs;
    cs.drift = [mu0](double, StateView, double, std::span<double> out) {
        std::fill(out.begin(), out.end(), mu0);
    };
    cs.diffusion = scaled_identity_diffusion(p.at("sigma0"), spec.state_dim, spec.noise_dim);
    cs.running_cost = [weight](double, StateView x, double c) {
        double s = 0.0;
        for (double xi : x) s += (xi - c) * (xi - c);
        return weight * s;
    };
    cs.terminal_cost = [](StateView) { return 0.0; };
    return cs;
}

const std::vector<Builtin>& builtins() {
    static const std::vector<Builtin> table = {
        {"CONSTANT", {}, &make_constant},
        {"LINEAR_RATE", {{"sigma0", 1.0, 0.0, 100.0}}, &make_linear_rate},
        {"PAYOUT", {{"sigma0", 1.0, 0.0, 100.0}}, &make_payout},
        {"TRACKING",
         {{"mu0", 0.5, -100.0, 100.0}, {"sigma0", 1.0, 0.0, 100.0}, {"weight", 1.0, 0.0, 100.0}},
         &make_tracking},
    };
    return table;
}

} // namespace

std::vector<std::string> registered_models() {
    std::vector<std::string> names;
    for (const auto& b : builtins()) names.emplace_back(b.name);
    return names;
}

Model build_model(const ModelId& id, const ProblemSpec& spec) {
    spec.validate();
    const auto& table = builtins();
    const auto it = std::find_if(table.begin(), table.end(),
                                 [&](const Builtin& b) { return id.name == b.name; });
    if (it == table.end()) {
        std::ostringstream msg;
        msg << "unknown model '" << id.name << "'; registered:";
        for (const auto& b : table) msg << ' ' << b.name;
        throw ConfigError(msg.str());
    }
    std::map<std::string, double> params;
    for (const auto& [key, value] : id.params) {
        const auto rule = std::find_if(it->rules.begin(), it->rules.end(),
                                       [&](const ParamRule& r) { return key == r.key; });
        if (rule == it->rules.end())
            throw ConfigError("model " + id.name + " has no parameter '" + key + "'");
        if (!std::isfinite(value) || value < rule->lo || value > rule->hi) {
            std::ostringstream msg;
            msg << "model parameter " << key << " = " << value << " outside [" << rule->lo
                << ", " << rule->hi << "]";
            throw ConfigError(msg.str());
        }
        params[key] = value;
    }
    for (const auto& rule : it->rules) params.emplace(rule.key, rule.fallback);

    Model model;
    model.id = ModelId{id.name, params};
    model.spec = spec;
    model.coef = it->make(params, spec);
    return model;
}

RegularityConstants::RegularityConstants(double lipschitz_K, double holder_kappa)
    : K_(lipschitz_K), kappa_(holder_kappa), kappa_prime_(std::min(holder_kappa, 0.5)) {
    if (!std::isfinite(K_) || K_ <= 0.0)
        throw ConfigError("Lipschitz constant must be finite and positive");
    if (!(kappa_ > 0.0 && kappa_ <= 1.0))
        throw ConfigError("Hoelder exponent must lie in (0, 1]");
}

namespace {

constexpr int kScaleCount = 4;
// Smallest admissible K; all-zero quotients (CONSTANT) still yield K > 0.
constexpr double kMinLipschitz = 1e-12;

double norm(std::span<const double> v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
}

// Stacked values of (b, sigma, f) at one point.
std::vector<double> coefficient_vector(const Model& m, double t, StateView x, double c) {
    const auto n = static_cast<std::size_t>(m.spec.state_dim);
    const auto k = static_cast<std::size_t>(m.spec.noise_dim);
    std::vector<double> out(n + n * k + 1);
    m.coef.drift(t, x, c, std::span<double>(out.data(), n));
    m.coef.diffusion(t, x, c, std::span<double>(out.data() + n, n * k));
    out.back() = m.coef.running_cost(t, x, c);
    for (double v : out)
        if (!std::isfinite(v)) throw ModelError("non-finite coefficient evaluation");
    return out;
}

} // namespace

std::vector<SamplePair> regularity_samples(const Model& model, int samples,
                                           const RegularityOptions& opts) {
    if (samples < 2) throw ConfigError("estimate_regularity needs at least 2 samples");
    const auto n = static_cast<std::size_t>(model.spec.state_dim);
    const double R = opts.box_radius;
    const double lo = model.spec.c_lower;
    const double hi = model.spec.c_upper;
    const CounterRng rng(opts.seed);

    std::vector<SamplePair> pairs;
    pairs.reserve(static_cast<std::size_t>(samples));
    // Anchor at the origin: the growth and c-quotients are attained there for
    // state-independent coefficients.
    pairs.push_back({0.0, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), lo, hi, -1});

    for (std::uint64_t r = 1; pairs.size() < static_cast<std::size_t>(samples); ++r) {
        std::uint64_t lane = 0;
        auto u = [&] { return rng.uniform(0, r, lane++); };
        SamplePair p;
        p.t = model.spec.horizon * u();
        p.x.resize(n);
        for (auto& xi : p.x) xi = R * (2.0 * u() - 1.0);
        p.c = lo + (hi - lo) * u();
        p.x_hat = p.x;
        p.c_hat = p.c;
        switch (r % 3) {
        case 0:
            for (auto& xi : p.x_hat) xi = R * (2.0 * u() - 1.0);
            p.c_hat = lo + (hi - lo) * u();
            break;
        case 1: {
            const double delta = std::pow(10.0, -1.0 - 3.0 * u());
            for (auto& xi : p.x_hat) xi = std::clamp(xi + delta * (2.0 * u() - 1.0), -R, R);
            break;
        }
        default: {
            p.scale = static_cast<int>((r / 3) % kScaleCount);
            const double delta = std::pow(10.0, -1.0 - p.scale);
            // Every other sweep of the ladder is anchored at the lower bound.
            if ((r / 3 / kScaleCount) % 2 == 0) p.c = lo;
            p.c_hat = (p.c + delta <= hi) ? p.c + delta : p.c - delta;
            break;
        }
        }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

RegularityConstants estimate_regularity(const Model& model, int samples,
                                        const RegularityOptions& opts) {
    const auto pairs = regularity_samples(model, samples, opts);

    struct Evaluated {
        double dphi;
        double dx;
        double growth_x;
        double dc;
        int scale;
    };
    std::vector<Evaluated> ev;
    ev.reserve(pairs.size());
    double growth = 0.0;
    for (const auto& p : pairs) {
        const auto a = coefficient_vector(model, p.t, p.x, p.c);
        const auto b = coefficient_vector(model, p.t, p.x_hat, p.c_hat);
        std::vector<double> diff(a.size()), dxv(p.x.size());
        for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
        for (std::size_t i = 0; i < p.x.size(); ++i) dxv[i] = p.x[i] - p.x_hat[i];
        const double nx = norm(p.x);
        const double nxh = norm(p.x_hat);
        const auto n = static_cast<std::size_t>(model.spec.state_dim);
        const auto k = static_cast<std::size_t>(model.spec.noise_dim);
        // Growth quotient per coefficient block.
        auto block_norm = [&](const std::vector<double>& v, std::size_t off, std::size_t len) {
            return norm(std::span<const double>(v.data() + off, len));
        };
        for (const auto* v : {&a, &b}) {
            const double nrm = (v == &a) ? nx : nxh;
            growth = std::max({growth, block_norm(*v, 0, n) / (1.0 + nrm),
                               block_norm(*v, n, n * k) / (1.0 + nrm),
                               std::abs(v->back()) / (1.0 + nrm)});
        }
        // Differences per block; the assumption is stated for each phi.
        const double dphi = std::max({block_norm(diff, 0, n), block_norm(diff, n, n * k),
                                      std::abs(diff.back())});
        ev.push_back({dphi, norm(dxv), 1.0 + nx + nxh, std::abs(p.c - p.c_hat), p.scale});
    }

    auto quotient = [](const Evaluated& e, double kappa) {
        const double denom = e.dx + e.growth_x * std::pow(e.dc, kappa);
        return denom > 0.0 ? e.dphi / denom : 0.0;
    };

    double chosen = kHolderLadder[std::size(kHolderLadder) - 1];
    for (double kappa : kHolderLadder) {
        std::array<double, kScaleCount> per_scale{};
        std::array<bool, kScaleCount> seen{};
        for (const auto& e : ev) {
            if (e.scale < 0) continue;
            per_scale[static_cast<std::size_t>(e.scale)] =
                std::max(per_scale[static_cast<std::size_t>(e.scale)], quotient(e, kappa));
            seen[static_cast<std::size_t>(e.scale)] = true;
        }
        int coarse = -1, fine = -1;
        for (int s = 0; s < kScaleCount; ++s) {
            if (!seen[static_cast<std::size_t>(s)]) continue;
            if (coarse < 0) coarse = s;
            fine = s;
        }
        bool bounded = true;
        if (coarse >= 0 && fine > coarse) {
            const double qc = per_scale[static_cast<std::size_t>(coarse)];
            const double qf = per_scale[static_cast<std::size_t>(fine)];
            // A kappa too large by 1/4 inflates the quotient by >= 10^(0.25) per decade.
            bounded = qf <= 2.5 * qc + 1e-12;
        }
        if (bounded) {
            chosen = kappa;
            break;
        }
    }

    double K = growth;
    for (const auto& e : ev) K = std::max(K, quotient(e, chosen));
    return RegularityConstants(std::max(K, kMinLipschitz), chosen);
}

} // namespace ratchet
