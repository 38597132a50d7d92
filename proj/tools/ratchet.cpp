#include "ratchet/commands.hpp"

#include <iostream>
#include <string>
#include <utility>

#include "CLI11.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Ratcheting control solver: solve, oracle, verify, converge, acceptance"};
    app.require_subcommand(1);
    ratchet::CommandOptions opts;
    std::string config, out;
    std::uint64_t seed = 0;
    int threads = 1;

    const std::pair<const char*, const char*> verbs[] = {
        {"solve", "solve the variational inequality on the grid"},
        {"oracle", "brute-force Monte-Carlo value and dynamic programming check"},
        {"verify", "viscosity checks on a computed or stored value field"},
        {"converge", "empirical order over nested refinements"},
        {"acceptance", "run the acceptance criteria"}};
    for (const auto& [verb, help] : verbs) {
        CLI::App* sub = app.add_subcommand(verb, help);
        auto* cfg_opt = sub->add_option("--config", config, "run configuration (JSON)");
        if (std::string(verb) != "acceptance") cfg_opt->required();
        sub->add_option("--out", out, "output directory (overrides the config)");
        sub->add_option("--seed", seed, "random seed (overrides the config)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : ratchet::kExitConfig;
    }
    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--config")) opts.config = config;
    if (sub->count("--out")) opts.out = out;
    if (sub->count("--seed")) opts.seed = seed;
    if (sub->count("--threads")) opts.threads = threads;
    return ratchet::run_verb(sub->get_name(), opts, std::cout, std::cerr);
}
