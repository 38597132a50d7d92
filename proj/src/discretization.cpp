#include "ratchet/discretization.hpp"

#include "ratchet/errors.hpp"
#include "ratchet/scheme.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>

namespace ratchet {

bool Grid::reporting(std::size_t j) const noexcept {
    return std::abs(x_nodes[j]) <= reporting_radius + 1e-12 * (1.0 + reporting_radius);
}

namespace {

std::vector<double> uniform_nodes(double lo, double hi, int intervals) {
    std::vector<double> nodes(static_cast<std::size_t>(intervals) + 1);
    const double step = (hi - lo) / intervals;
    for (int i = 0; i <= intervals; ++i) nodes[static_cast<std::size_t>(i)] = lo + step * i;
    nodes.back() = hi;
    return nodes;
}

} // namespace

Grid make_grid(const ProblemSpec& spec, int nt, int nx, int nc, double x_radius) {
    spec.validate();
    if (nt < 3 || nx < 3 || nc < 3) throw ConfigError("grid counts nt, nx, nc must be >= 3");
    if (!std::isfinite(x_radius) || x_radius <= 0.0)
        throw ConfigError("grid.x_radius must be finite and positive");

    Grid g;
    g.t_nodes = uniform_nodes(0.0, spec.horizon, nt);
    g.x_nodes = uniform_nodes(-x_radius, x_radius, nx);
    // Middle node is exactly zero for even nx.
    if (nx % 2 == 0) g.x_nodes[static_cast<std::size_t>(nx / 2)] = 0.0;
    g.dc = (spec.c_upper - spec.c_lower) / nc;
    g.c_nodes.resize(static_cast<std::size_t>(nc));
    for (int k = 0; k < nc; ++k)
        g.c_nodes[static_cast<std::size_t>(k)] = spec.c_lower + g.dc * (k + 1);
    g.c_nodes.back() = spec.c_upper;
    g.dt = spec.horizon / nt;
    g.h = 2.0 * x_radius / nx;
    g.c_lower = spec.c_lower;
    g.reporting_radius = kReportingFraction * x_radius;
    return g;
}

double suggest_x_radius(double reporting_radius, double K, double horizon) {
    const double reach = reporting_radius + K * (1.0 + reporting_radius) * std::sqrt(horizon);
    return std::max(reach, reporting_radius / kReportingFraction);
}

ValueField::ValueField(Grid grid, double fill)
    : grid_(std::move(grid)), values_(grid_.size(), fill) {}

void fill_terminal(ValueField& field, const Model& model) {
    const Grid& g = field.grid();
    const std::size_t last = g.n_t() - 1;
    for (std::size_t j = 0; j < g.n_x(); ++j) {
        const double hv = model.coef.H(g.x_nodes[j]);
        if (!std::isfinite(hv)) throw ModelError("terminal cost is not finite");
        for (std::size_t k = 0; k < g.n_c(); ++k) field.at(last, j, k) = hv;
    }
}

std::vector<double> solve_boundary_G(const Model& model, const Grid& grid,
                                     const SchemeConfig& cfg) {
    cfg.validate();
    check_cfl(model, grid, cfg);
    const std::size_t nt = grid.n_t();
    const std::size_t nx = grid.n_x();
    const double c_bar = grid.c_upper();
    std::vector<double> G(nt * nx);
    for (std::size_t j = 0; j < nx; ++j) G[(nt - 1) * nx + j] = model.coef.H(grid.x_nodes[j]);
    for (std::size_t i = nt - 1; i-- > 0;) {
        const auto next = std::span<const double>(G.data() + (i + 1) * nx, nx);
        const auto now = theta_step(model, grid, i, c_bar, next, cfg);
        std::copy(now.begin(), now.end(), G.begin() + static_cast<std::ptrdiff_t>(i * nx));
    }
    return G;
}

namespace {

void put(std::ostream& out, double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, res.ptr - buf);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw IoError("malformed number '" + s + "' in value CSV");
    return v;
}

// Reconstructs the axis from sorted unique coordinates; spacing must be uniform.
std::vector<double> axis_from(const std::map<double, std::size_t>& seen, const char* name) {
    std::vector<double> nodes;
    for (const auto& [v, _] : seen) nodes.push_back(v);
    if (nodes.size() < 2) throw IoError(std::string("value CSV has a degenerate ") + name + " axis");
    const double step = (nodes.back() - nodes.front()) / static_cast<double>(nodes.size() - 1);
    for (std::size_t i = 1; i < nodes.size(); ++i)
        if (std::abs(nodes[i] - nodes[i - 1] - step) > 1e-9 * (1.0 + std::abs(step)))
            throw IoError(std::string("value CSV ") + name + " axis is not uniform");
    return nodes;
}

} // namespace

void write_value_csv(std::ostream& out, const ValueField& field) {
    const Grid& g = field.grid();
    out << "t,x,c,v\n";
    for (std::size_t i = 0; i < g.n_t(); ++i)
        for (std::size_t j = 0; j < g.n_x(); ++j)
            for (std::size_t k = 0; k < g.n_c(); ++k) {
                put(out, g.t_nodes[i]);
                out << ',';
                put(out, g.x_nodes[j]);
                out << ',';
                put(out, g.c_nodes[k]);
                out << ',';
                put(out, field.at(i, j, k));
                out << '\n';
            }
    if (!out) throw IoError("failed writing value CSV");
}

ValueField read_value_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("value CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "t,x,c,v") throw IoError("value CSV header must be 't,x,c,v'");

    struct Row {
        double t, x, c, v;
    };
    std::vector<Row> rows;
    std::map<double, std::size_t> ts, xs, cs;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        double vals[4];
        for (int f = 0; f < 4; ++f) {
            if (!std::getline(ss, field, ',')) throw IoError("value CSV row has fewer than 4 fields");
            vals[f] = parse_double(field);
        }
        rows.push_back({vals[0], vals[1], vals[2], vals[3]});
        ts.emplace(vals[0], 0);
        xs.emplace(vals[1], 0);
        cs.emplace(vals[2], 0);
    }

    Grid g;
    g.t_nodes = axis_from(ts, "t");
    g.x_nodes = axis_from(xs, "x");
    g.c_nodes = axis_from(cs, "c");
    if (g.size() != rows.size()) throw IoError("value CSV does not cover a full tensor grid");
    g.dt = (g.t_nodes.back() - g.t_nodes.front()) / static_cast<double>(g.n_t() - 1);
    g.h = (g.x_nodes.back() - g.x_nodes.front()) / static_cast<double>(g.n_x() - 1);
    g.dc = (g.c_nodes.back() - g.c_nodes.front()) / static_cast<double>(g.n_c() - 1);
    g.c_lower = g.c_nodes.front() - g.dc;
    g.reporting_radius = kReportingFraction * std::max(-g.x_nodes.front(), g.x_nodes.back());

    std::size_t pos = 0;
    for (auto& [v, idx] : ts) idx = pos++;
    pos = 0;
    for (auto& [v, idx] : xs) idx = pos++;
    pos = 0;
    for (auto& [v, idx] : cs) idx = pos++;

    ValueField field(g, std::numeric_limits<double>::quiet_NaN());
    for (const auto& r : rows) field.at(ts[r.t], xs[r.x], cs[r.c]) = r.v;
    for (double v : field.values())
        if (std::isnan(v)) throw IoError("value CSV does not cover a full tensor grid");
    return field;
}

} // namespace ratchet
