#pragma once

#include "ratchet/discretization.hpp"
#include "ratchet/model.hpp"
#include "ratchet/scheme.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

namespace ratchet {

struct HamiltonianInput {
    double t;
    double x;
    double c;
    double p; // first-derivative slot
    double P; // second-derivative slot
};

/// G(t, x, c, p, P) = 1/2 P sigma^2 + b p - f  (N = m = 1).
///
/// The HJB inequality reads max{-v_t + G(t, x, c, -v_x, -v_xx), -v_c} = 0.
/// Substituting p = -v_x, P = -v_xx turns the first branch into
/// -(v_t + 1/2 sigma^2 v_xx + b v_x + f), so in the continuation region the
/// solver integrates v_t + 1/2 sigma^2 v_xx + b v_x + f = 0 backward in time.
double hamiltonian_G(const HamiltonianInput& in, const Model& model);

/// Backward theta-step of one control slice: values at t_{i+1} to values at t_i.
std::vector<double> pde_step(const Model& model, const Grid& grid, std::span<const double> next,
                             std::size_t i, std::size_t k_c, const SchemeConfig& cfg,
                             StepStats* stats = nullptr);

/// In-place suffix minimum along one c-line: v[k] <- min_{k' >= k} v[k'].
/// When `argmin` is non-empty it receives, per k, the lowest index attaining
/// the minimum over k' >= k.
void ratchet_project(std::span<double> c_line, std::span<std::size_t> argmin = {});

/// Projects every c-line of one time level laid out as [j][k].
void ratchet_project_level(std::span<double> level, std::size_t n_c);

enum class Region : std::uint8_t { Continue = 0, Jump = 1 };

class PolicyField {
public:
    PolicyField() = default;
    explicit PolicyField(Grid grid);

    const Grid& grid() const noexcept { return grid_; }
    Region region(std::size_t i, std::size_t j, std::size_t k) const {
        return region_[grid_.index(i, j, k)];
    }
    /// c-index of the jump target; only meaningful where region == Jump.
    std::size_t jump_target(std::size_t i, std::size_t j, std::size_t k) const {
        return target_[grid_.index(i, j, k)];
    }
    void set(std::size_t i, std::size_t j, std::size_t k, Region r, std::size_t target) {
        region_[grid_.index(i, j, k)] = r;
        target_[grid_.index(i, j, k)] = target;
    }

private:
    Grid grid_;
    std::vector<Region> region_;
    std::vector<std::size_t> target_;
};

struct SolveDiagnostics {
    std::size_t time_steps = 0;
    std::size_t jump_nodes = 0;
    int max_refinement_iters = 0;
    double max_linear_residual = 0.0;
    double seconds = 0.0;
};

struct SolveResult {
    ValueField value;
    PolicyField policy;
    std::vector<double> boundary_G; // [i_t][j_x]
    SolveDiagnostics diagnostics;
};

/// Backward sweep of the discrete dynamic programming principle: diffuse each
/// control slice over [t_i, t_{i+1}], then take the costless upward jump
/// wherever it lowers the value. Slices within a level run on `threads` workers.
SolveResult solve_backward(const Model& model, const Grid& grid, const SchemeConfig& cfg,
                           int threads = 1);

struct FeedbackDecision {
    double c_next;
    bool clamped; // query was outside the grid box
};

/// Nearest-node lookup of a PolicyField.
class FeedbackRule {
public:
    explicit FeedbackRule(PolicyField policy);

    FeedbackDecision operator()(double t, double x, double c) const;

private:
    PolicyField policy_;
};

FeedbackRule extract_feedback(const PolicyField& policy);

struct ConvergenceStudy {
    std::vector<double> sup_diffs; // sup |V_l - V_{l+1}| over the coarse reporting nodes
    std::vector<double> orders;    // log2(sup_diffs[l] / sup_diffs[l + 1])
    double max_abs_value = 0.0;
    double seconds = 0.0;
};

/// Solves on nested grids, each halving dt, h and dc of its predecessor, and
/// compares successive solutions on the coarser grid's nodes.
ConvergenceStudy convergence_study(const Model& model, const std::vector<Grid>& grids,
                                   const SchemeConfig& cfg, int threads = 1);

/// CSV with header "t,x,c,region,jump_target_c"; jump_target_c is empty for
/// CONTINUE nodes.
void write_policy_csv(std::ostream& out, const PolicyField& policy);

} // namespace ratchet
