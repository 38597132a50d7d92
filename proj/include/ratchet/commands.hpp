#pragma once

#include "ratchet/config.hpp"
#include "ratchet/hjb_solver.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>

namespace ratchet {

enum ExitCode : int {
    kExitOk = 0,
    kExitConfig = 2,
    kExitNumerical = 3,
    kExitIo = 4,
    kExitVerify = 5,
};

struct CommandOptions {
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> out;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

/// Loads the config, applies the command-line overrides and validates.
RunConfig resolve_config(const CommandOptions& opts);

/// Exclusive claim on an output directory for the lifetime of the object.
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path& dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::filesystem::path lock_path_;
};

/// Closed-form value V(t, x, c) for built-ins that have one.
std::optional<std::function<double(double, double, double)>> closed_form_value(const Model& model);

int cmd_solve(const RunConfig& cfg, std::ostream& log);
int cmd_oracle(const RunConfig& cfg, std::ostream& log);
int cmd_verify(const RunConfig& cfg, std::ostream& log);
int cmd_converge(const RunConfig& cfg, std::ostream& log);

/// Dispatches a verb and maps exceptions onto exit codes; messages go to `err`.
int run_verb(const std::string& verb, const CommandOptions& opts, std::ostream& log,
             std::ostream& err);

} // namespace ratchet
