#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ratchet {

/// Horizon, control bounds and dimensions of one problem instance. The
/// control level lives in the half-open interval (c_lower, c_upper].
struct ProblemSpec {
    double horizon = 1.0;
    double c_lower = 0.0;
    double c_upper = 1.0;
    int state_dim = 1;
    int noise_dim = 1;

    /// Throws ConfigError when an invariant is violated.
    void validate() const;
};

using StateView = std::span<const double>;

/// Evaluable coefficients b, sigma, f, H. Drift writes N entries, diffusion
/// writes an N x m matrix in row-major order. All callables must be pure.
struct CoefficientSet {
    std::function<void(double t, StateView x, double c, std::span<double> out)> drift;
    std::function<void(double t, StateView x, double c, std::span<double> out)> diffusion;
    std::function<double(double t, StateView x, double c)> running_cost;
    std::function<double(StateView x)> terminal_cost;

    // Scalar shortcuts for N = m = 1.
    double b(double t, double x, double c) const;
    double sigma(double t, double x, double c) const;
    double f(double t, double x, double c) const;
    double H(double x) const;
};

struct ModelId {
    std::string name;
    std::map<std::string, double> params;
};

struct Model {
    ModelId id;
    ProblemSpec spec;
    CoefficientSet coef;
};

/// Builds a registered model. Unknown names, unknown parameter keys and
/// out-of-range parameters raise ConfigError. Missing parameters take their
/// documented defaults and are written back into the returned id.
///
/// Built-ins (x is the state, c the locked control level):
///   CONSTANT     b = 0,      sigma = 0,      f = 0,                 H = sum(x)
///   LINEAR_RATE  b = 0,      sigma = sigma0, f = c,                 H = 0
///   PAYOUT       b = 0,      sigma = sigma0, f = -c,                H = 0
///   TRACKING     b = mu0,    sigma = sigma0, f = weight*|x - c|^2,  H = 0
Model build_model(const ModelId& id, const ProblemSpec& spec = {});

std::vector<std::string> registered_models();

/// Lipschitz constant K and Hoelder exponent kappa of the coefficients, with
/// kappa_prime = min(kappa, 1/2) maintained by construction.
class RegularityConstants {
public:
    RegularityConstants(double lipschitz_K, double holder_kappa);

    double lipschitz_K() const noexcept { return K_; }
    double holder_kappa() const noexcept { return kappa_; }
    double kappa_prime() const noexcept { return kappa_prime_; }

private:
    double K_;
    double kappa_;
    double kappa_prime_;
};

struct RegularityOptions {
    double box_radius = 10.0;
    std::uint64_t seed = 0x5eed'2024ULL;
};

/// One sampled pair of points sharing the same time.
struct SamplePair {
    double t;
    std::vector<double> x;
    std::vector<double> x_hat;
    double c;
    double c_hat;
    int scale = -1; // c-only pairs: index into the scale ladder, else -1
};

inline constexpr double kHolderLadder[] = {1.0, 0.5, 0.25};

/// Deterministic sample pairs; the first n pairs for any larger n are the same.
std::vector<SamplePair> regularity_samples(const Model& model, int samples,
                                           const RegularityOptions& opts = {});

/// Fits K and kappa from difference quotients over sampled pairs. K bounds
/// both the Lipschitz/Hoelder quotients and the linear-growth quotients
/// |phi| / (1 + |x|) for phi = b, sigma, f.
RegularityConstants estimate_regularity(const Model& model, int samples,
                                        const RegularityOptions& opts = {});

} // namespace ratchet
