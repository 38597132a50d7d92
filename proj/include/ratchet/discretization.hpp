#pragma once

#include "ratchet/model.hpp"

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace ratchet {

/// Uniform tensor grid over [0, T] x [-R, R] x [c_lower + dc, c_upper].
/// The open endpoint c_lower is excluded by one spacing.
struct Grid {
    std::vector<double> t_nodes;
    std::vector<double> x_nodes;
    std::vector<double> c_nodes;
    double dt = 0.0;
    double h = 0.0;
    double dc = 0.0;
    double c_lower = 0.0;
    // Nodes with |x| <= reporting_radius are at least a quarter of the
    // truncation radius away from the artificial boundary.
    double reporting_radius = 0.0;

    std::size_t n_t() const noexcept { return t_nodes.size(); }
    std::size_t n_x() const noexcept { return x_nodes.size(); }
    std::size_t n_c() const noexcept { return c_nodes.size(); }
    std::size_t size() const noexcept { return n_t() * n_x() * n_c(); }
    std::size_t level_size() const noexcept { return n_x() * n_c(); }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
        return (i * n_x() + j) * n_c() + k;
    }
    bool reporting(std::size_t j) const noexcept;
    double horizon() const noexcept { return t_nodes.back(); }
    double c_upper() const noexcept { return c_nodes.back(); }
};

inline constexpr double kReportingFraction = 0.5;

/// nt, nx: number of intervals in t and x; nc: number of control levels.
Grid make_grid(const ProblemSpec& spec, int nt, int nx, int nc, double x_radius);

/// Truncation radius covering the reporting box plus the diffusion reach
/// K (1 + R) sqrt(T); the reporting box is then scaled into the inner half.
double suggest_x_radius(double reporting_radius, double K, double horizon);

enum class Stage { Raw, Projected };

/// Gridded value function v[i_t][j_x][k_c], row-major in that order.
class ValueField {
public:
    ValueField() = default;
    explicit ValueField(Grid grid, double fill = 0.0);

    const Grid& grid() const noexcept { return grid_; }
    Stage stage() const noexcept { return stage_; }
    void set_stage(Stage s) noexcept { stage_ = s; }

    double& at(std::size_t i, std::size_t j, std::size_t k) { return values_[grid_.index(i, j, k)]; }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return values_[grid_.index(i, j, k)];
    }
    std::span<double> level(std::size_t i) {
        return {values_.data() + i * grid_.level_size(), grid_.level_size()};
    }
    std::span<const double> level(std::size_t i) const {
        return {values_.data() + i * grid_.level_size(), grid_.level_size()};
    }
    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

private:
    Grid grid_;
    std::vector<double> values_;
    Stage stage_ = Stage::Raw;
};

/// Sets the terminal slice to H(x_j) for every control level.
void fill_terminal(ValueField& field, const Model& model);

struct SchemeConfig;

/// G(t, x) = J(t, x, c_upper): the linear parabolic equation with the
/// control frozen at c_upper, solved backward with the same theta-scheme as
/// the HJB sweep. Returned as [i_t][j_x] flattened.
std::vector<double> solve_boundary_G(const Model& model, const Grid& grid,
                                     const SchemeConfig& cfg);

/// CSV with header "t,x,c,v", rows ordered by t, then x, then c. Numbers use
/// the shortest round-trip representation.
void write_value_csv(std::ostream& out, const ValueField& field);
ValueField read_value_csv(std::istream& in);

} // namespace ratchet
