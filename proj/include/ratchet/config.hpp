#pragma once

#include "ratchet/discretization.hpp"
#include "ratchet/model.hpp"
#include "ratchet/scheme.hpp"
#include "ratchet/simulation_oracle.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace ratchet {

inline constexpr int kConfigSchemaVersion = 1;

struct GridConfig {
    int nt = 100;
    int nx = 100;
    int nc = 20;
    double x_radius = 4.0;
};

struct OracleConfig {
    std::size_t n_paths = 10000;
    double dt_sim = 0.01;
    std::uint64_t seed = 1;
    std::vector<double> levels; // empty: the grid's control nodes
    int intervals = 4;
    double t0 = 0.0;
    double x0 = 0.0;
    double c_start = 0.0; // defaults to the first level when not set
    bool c_start_set = false;
    double t_mid = 0.0; // 0: midpoint of the interval grid
    double table_x_min = -3.0;
    double table_x_max = 3.0;
    int table_nx = 13;
    std::size_t table_paths = 0;
    double budget = 1e6;
};

struct LabConfig {
    std::vector<double> gammas{0.5, 0.25, 0.125};
    std::string value_csv; // empty: <out>/value.csv when present, else solve
    double residual_constant = 20.0;
    double sandwich_tolerance = 0.2;
    double semiconvexity_tolerance = 1e-9;
    double monotone_tolerance = 1e-12;
    double estimate_ceiling = 1e6;
    int regularity_samples = 2000;
};

struct ConvergeConfig {
    int refinements = 3;
    double order_min = 0.7;
    double order_max = 2.5;
    double exact_threshold = 1e-12;
};

struct RunConfig {
    ModelId model{"LINEAR_RATE", {}};
    ProblemSpec problem;
    GridConfig grid;
    SchemeConfig scheme;
    OracleConfig oracle;
    LabConfig lab;
    ConvergeConfig converge;
    std::filesystem::path output_dir = "out";
    std::vector<std::string> formats{"csv", "json"};
    int threads = 1;

    /// Checks every block against the preconditions of the operations that
    /// consume it. Throws ConfigError.
    void validate() const;
};

/// Parses a config document; a summary.json (with a "config" member) is
/// accepted too, so a run can be replayed from its own record.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

} // namespace ratchet
