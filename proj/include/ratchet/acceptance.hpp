#pragma once

#include <filesystem>
#include <iosfwd>
#include <set>
#include <string>
#include <vector>

namespace ratchet {

struct AcceptanceOptions {
    int threads = 1;
    std::filesystem::path output_dir = "acceptance_out";
    std::set<int> only; // empty: every criterion
};

struct CriterionResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct AcceptanceReport {
    std::vector<CriterionResult> criteria;

    bool all_pass() const;
};

/// Runs the acceptance criteria with their pinned instances and tolerances,
/// printing one PASS/FAIL line per criterion to `out`.
AcceptanceReport run_acceptance(const AcceptanceOptions& opts, std::ostream& out);

} // namespace ratchet
