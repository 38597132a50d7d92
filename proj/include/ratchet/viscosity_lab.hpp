#pragma once

#include "ratchet/discretization.hpp"
#include "ratchet/model.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

namespace ratchet {

enum class EnvelopeKind { Sup, Inf };

/// Sup-convolution v^gamma or inf-convolution v_gamma of a gridded field,
/// with the optimizing node recorded per node (flat grid index).
struct ConvolutionField {
    Grid grid;
    std::vector<double> values;
    double gamma = 1.0;
    EnvelopeKind kind = EnvelopeKind::Sup;
    std::vector<std::size_t> argmax;

    double at(std::size_t i, std::size_t j, std::size_t k) const { return values[grid.index(i, j, k)]; }
};

/// v^gamma(n) = max over grid nodes m of v(m) - |n - m|^2 / (2 gamma^2).
///
/// The quadratic penalty separates over the t, x and c axes, so the maximum
/// is taken one axis at a time; each 1-D pass is an exhaustive search over
/// the window |n - m|^2 <= 2 gamma^2 (max v - v(n)), outside of which no
/// node can beat the center.
ConvolutionField sup_convolution(const ValueField& source, double gamma);

/// v_gamma(n) = min over grid nodes m of v(m) + |n - m|^2 / (2 gamma^2).
ConvolutionField inf_convolution(const ValueField& source, double gamma);

/// Largest violation of discrete semiconvexity (SUP) or semiconcavity (INF):
/// minus the smallest axis second difference of v^gamma + |n|^2 / (2 gamma^2)
/// (resp. of |n|^2 / (2 gamma^2) - v_gamma). A value <= 0 means the check passes.
double semiconvexity_check(const ConvolutionField& field);

/// 2 kappa' / (2 - kappa'): decay rate of v^gamma - v_gamma in gamma.
double sandwich_rate(double kappa_prime);

struct SandwichFit {
    std::vector<double> gammas;
    std::vector<double> gaps;    // D(gamma), normalized max gap over reporting nodes
    std::optional<double> slope; // empty: gaps vanish (decay faster than any power)
};

/// Log-log least-squares slope of D(gamma) = max (v^gamma - v_gamma) / (1 + |x|)^(2 / (2 - kappa'))
/// over reporting nodes. Gaps at rounding level are dropped from the fit; with
/// fewer than two left the slope is reported as unbounded.
SandwichFit sandwich_scaling(const ValueField& source, const std::vector<double>& gammas,
                             double kappa_prime);

struct NodeIndex {
    std::size_t i, j, k;
};

struct NeighborhoodResult {
    double L_sup = 0.0; // inf of G over the ball (the operator paired with v^gamma)
    double L_inf = 0.0; // sup of G over the ball (the operator paired with v_gamma)
    std::size_t nodes = 0;
    bool center_only = false;
};

/// Squared radius of the ball C(t, x, c):
/// 2 gamma^2 K gamma^(2k'/(2-k')) (1 + |x|)^(2/(2-k')).
double neighborhood_radius_sq(double gamma, double K, double kappa_prime, double x);

/// Grid search of G(., p, P) over the nodes of `field`'s grid inside C(t, x, c).
NeighborhoodResult neighborhood_operators(const ValueField& field, NodeIndex node, double gamma,
                                          double p, double P, const Model& model,
                                          const RegularityConstants& reg, double K);

struct ResidualReport {
    std::vector<double> r1; // -D_t v + G(-D_x v, -D_xx v); NaN off the interior
    std::vector<double> r2; // -D_c v; NaN off the interior
    double max_r1 = 0.0;
    double max_r2 = 0.0;
    double min_combined = 0.0; // min of max(r1, r2)
    double max_combined = 0.0; // max of |max(r1, r2)|
    std::size_t interior_nodes = 0;
};

/// Residuals of max{-v_t + G(t, x, c, -v_x, -v_xx), -v_c} = 0 with the
/// scheme's stencils: forward differences in t and c, upwinded D_x, central
/// D_xx. Interior nodes: i < last, 0 < j < last, k < last.
ResidualReport residual_check(const ValueField& field, const Model& model);

struct EstimateReport {
    double growth_K = 0.0;      // |V| <= K1 (1 + |x|)
    double time_holder_K = 0.0; // |dV| <= K2 (|dx| + (1 + |x| + |x'|) |dt|^(1/2))
    double c_holder_K = 0.0;    // |dV| <= K3 (1 + |x|) |dc|^kappa
    double max_violation = 0.0;
    bool exceeds_ceiling = false;

    double combined_K() const noexcept;
};

/// Smallest constants for the three growth and continuity estimates over all
/// axis-aligned node pairs inside the reporting box.
EstimateReport estimate_fit(const ValueField& field, const RegularityConstants& reg,
                            double ceiling = 1e6);

} // namespace ratchet
