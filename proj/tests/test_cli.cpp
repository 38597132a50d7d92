#include "ratchet/commands.hpp"
#include "ratchet/config.hpp"
#include "ratchet/discretization.hpp"
#include "ratchet/errors.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>

#include "doctest.h"
#include "json.hpp"

using namespace ratchet;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ratchet_cli_" + std::to_string(::getpid())) / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path write_config(const fs::path& dir, const json& doc) {
    const fs::path p = dir / "config.json";
    std::ofstream(p) << doc.dump(2);
    return p;
}

struct Run {
    int code;
    std::string err;
};

Run cli(const std::string& args, const fs::path& dir) {
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(RATCHET_CLI_PATH) + " " + args + " > " + (dir / "stdout.txt").string() +
                            " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
}

json base(const std::string& model) {
    return {{"schema_version", 1},
            {"model", {{"name", model}}},
            {"grid", {{"nt", 20}, {"nx", 40}, {"nc", 5}, {"x_radius", 4.0}}}};
}

} // namespace

TEST_CASE("config parsing and validation") {
    const RunConfig cfg = parse_config(base("TRACKING"));
    CHECK(cfg.model.name == "TRACKING");
    CHECK(cfg.grid.nx == 40);
    CHECK_NOTHROW(cfg.validate());

    json bad = base("TRACKING");
    bad["grid"]["nxx"] = 3;
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    bad = base("TRACKING");
    bad["schema_version"] = 2;
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    bad = base("TRACKING");
    bad.erase("schema_version");
    CHECK_THROWS_AS(parse_config(bad), ConfigError);
    bad = base("TRACKING");
    bad["grid"]["nt"] = "many";
    CHECK_THROWS_AS(parse_config(bad), ConfigError);

    json invalid = base("TRACKING");
    invalid["lab"] = {{"gammas", {0.5, 0.25}}};
    CHECK_THROWS_AS(parse_config(invalid).validate(), ConfigError);
    invalid = base("TRACKING");
    invalid["oracle"] = {{"levels", {0.5, 0.25}}};
    CHECK_THROWS_AS(parse_config(invalid).validate(), ConfigError);
    invalid = base("NOT_A_MODEL");
    CHECK_THROWS_AS(parse_config(invalid).validate(), ConfigError);

    // A serialized config, or a summary embedding one, parses back to the same document.
    const json round = to_json(cfg);
    CHECK(to_json(parse_config(round)) == round);
    CHECK(to_json(parse_config(json{{"command", "solve"}, {"config", round}})) == round);
}

TEST_CASE("solve writes value, policy and summary") {
    const fs::path dir = scratch("solve_constant");
    const fs::path cfg = write_config(dir, base("CONSTANT"));
    REQUIRE(cli("solve --config " + cfg.string() + " --out " + (dir / "out").string(), dir).code == 0);
    std::ifstream in(dir / "out" / "value.csv");
    const ValueField v = read_value_csv(in);
    const Grid& g = v.grid();
    for (std::size_t i = 0; i < g.n_t(); ++i)
        for (std::size_t j = 0; j < g.n_x(); ++j)
            for (std::size_t k = 0; k < g.n_c(); ++k) CHECK(std::abs(v.at(i, j, k) - g.x_nodes[j]) <= 1e-12);
    CHECK(slurp(dir / "out" / "policy.csv").rfind("t,x,c,region,jump_target_c\n", 0) == 0);
    const json summary = json::parse(slurp(dir / "out" / "summary.json"));
    CHECK(summary.at("config").at("model").at("name") == "CONSTANT");
    CHECK_FALSE(fs::exists(dir / "out" / ".lock"));
}

TEST_CASE("solve reports the closed-form error for LINEAR_RATE") {
    const fs::path dir = scratch("solve_linear");
    const fs::path cfg = write_config(dir, base("LINEAR_RATE"));
    REQUIRE(cli("solve --config " + cfg.string() + " --out " + (dir / "out").string(), dir).code == 0);
    const json summary = json::parse(slurp(dir / "out" / "summary.json"));
    const json& cf = summary.at("closed_form");
    CHECK(cf.at("max_abs_error_t0_reporting").get<double>() <= cf.at("bound").get<double>());
    CHECK(cf.at("bound").get<double>() == doctest::Approx(2.0 * (0.2 + 0.05)));
}

TEST_CASE("summary replays bitwise") {
    const fs::path dir = scratch("replay");
    json doc = base("TRACKING");
    doc["oracle"] = {{"n_paths", 500}, {"dt_sim", 0.05}, {"intervals", 2}};
    const fs::path cfg = write_config(dir, doc);
    REQUIRE(cli("solve --config " + cfg.string() + " --out " + (dir / "a").string(), dir).code == 0);
    REQUIRE(cli("oracle --config " + cfg.string() + " --out " + (dir / "a").string(), dir).code == 0);
    const fs::path summary = dir / "a" / "summary.json";
    REQUIRE(cli("solve --config " + summary.string() + " --out " + (dir / "b").string(), dir).code == 0);
    REQUIRE(cli("oracle --config " + summary.string() + " --out " + (dir / "b").string(), dir).code == 0);
    CHECK(slurp(dir / "a" / "value.csv") == slurp(dir / "b" / "value.csv"));
    CHECK(slurp(dir / "a" / "oracle.json") == slurp(dir / "b" / "oracle.json"));

    REQUIRE(cli("oracle --config " + cfg.string() + " --seed 77 --out " + (dir / "c").string(), dir).code == 0);
    CHECK(slurp(dir / "a" / "oracle.json") != slurp(dir / "c" / "oracle.json"));
    const json replayed = json::parse(slurp(dir / "c" / "summary.json"));
    CHECK(replayed.at("config").at("oracle").at("seed") == 77);
}

TEST_CASE("malformed configs exit 2 without outputs") {
    const fs::path dir = scratch("malformed");
    json doc = base("LINEAR_RATE");
    doc["problem"] = {{"c_lower", 1.0}, {"c_upper", 1.0}};
    const fs::path cfg = write_config(dir, doc);
    const Run r = cli("solve --config " + cfg.string() + " --out " + (dir / "out").string(), dir);
    CHECK(r.code == 2);
    CHECK_FALSE(fs::exists(dir / "out"));

    std::ofstream(dir / "broken.json") << "{ not json";
    CHECK(cli("solve --config " + (dir / "broken.json").string(), dir).code == 2);
    CHECK(cli("solve --config " + (dir / "missing.json").string(), dir).code == 2);
    CHECK(cli("solve", dir).code == 2);
    CHECK(cli("frobnicate --config " + cfg.string(), dir).code == 2);
}

TEST_CASE("numerical and I/O failures map to exit 3 and 4") {
    const fs::path dir = scratch("failures");
    json doc = base("LINEAR_RATE");
    doc["grid"] = {{"nt", 4}, {"nx", 200}, {"nc", 4}, {"x_radius", 4.0}};
    doc["scheme"] = {{"theta", 0.0}};
    const fs::path cfg = write_config(dir, doc);
    const Run cfl = cli("solve --config " + cfg.string() + " --out " + (dir / "out").string(), dir);
    CHECK(cfl.code == 3);

    const fs::path ok = write_config(dir, base("LINEAR_RATE"));
    std::ofstream(dir / "occupied") << "a file, not a directory";
    CHECK(cli("solve --config " + ok.string() + " --out " + (dir / "occupied").string(), dir).code == 4);

    fs::create_directories(dir / "locked");
    std::ofstream(dir / "locked" / ".lock") << "";
    const Run locked = cli("solve --config " + ok.string() + " --out " + (dir / "locked").string(), dir);
    CHECK(locked.code == 4);
    CHECK(locked.err.find("locked") != std::string::npos);
}

TEST_CASE("oracle on tiny instances") {
    const fs::path dir = scratch("oracle");
    json doc = base("PAYOUT");
    doc["oracle"] = {{"n_paths", 200}, {"dt_sim", 0.05}, {"intervals", 4}, {"levels", {0.5, 1.0}}, {"c_start", 0.5}};
    const fs::path cfg = write_config(dir, doc);
    REQUIRE(cli("oracle --config " + cfg.string() + " --out " + (dir / "payout").string(), dir).code == 0);
    const json pay = json::parse(slurp(dir / "payout" / "oracle.json"));
    CHECK(pay.at("value_mean").get<double>() == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pay.at("argmin_path") == json({1.0, 1.0, 1.0, 1.0}));
    CHECK(pay.at("n_controls") == 5);
    for (const char* key : {"model", "t0", "x0", "c_start", "value_stderr", "n_paths"}) CHECK(pay.contains(key));

    json con = base("CONSTANT");
    con["oracle"] = {{"n_paths", 2000}, {"dt_sim", 0.05}, {"intervals", 2}, {"x0", 0.4}};
    const fs::path ccfg = write_config(dir, con);
    REQUIRE(cli("oracle --config " + ccfg.string() + " --out " + (dir / "constant").string(), dir).code == 0);
    const json c = json::parse(slurp(dir / "constant" / "oracle.json"));
    const json& dpp = c.at("dpp");
    CHECK(dpp.at("residual").get<double>() <= 3.0 * dpp.at("combined_std_error").get<double>() + 1e-12);

    json indivisible = base("TRACKING");
    indivisible["oracle"] = {{"n_paths", 100}, {"dt_sim", 0.05}, {"intervals", 3}};
    const fs::path icfg = write_config(dir, indivisible);
    CHECK(cli("oracle --config " + icfg.string() + " --out " + (dir / "indivisible").string(), dir).code == 2);
    CHECK_FALSE(fs::exists(dir / "indivisible"));

    json defaults = base("TRACKING");
    defaults["oracle"] = {{"n_paths", 100}};
    const fs::path dcfg = write_config(dir, defaults);
    CHECK(cli("oracle --config " + dcfg.string() + " --out " + (dir / "defaults").string(), dir).code == 0);

    json big = base("TRACKING");
    big["grid"]["nc"] = 40;
    big["oracle"] = {{"intervals", 10}};
    const fs::path bcfg = write_config(dir, big);
    const Run r = cli("oracle --config " + bcfg.string() + " --out " + (dir / "big").string(), dir);
    CHECK(r.code == 2);
    CHECK(r.err.find("budget") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "big"));
}

TEST_CASE("verify passes on LINEAR_RATE and catches a corrupted field") {
    const fs::path dir = scratch("verify");
    const fs::path cfg = write_config(dir, base("LINEAR_RATE"));
    const std::string out = (dir / "out").string();
    REQUIRE(cli("solve --config " + cfg.string() + " --out " + out, dir).code == 0);
    CHECK(cli("verify --config " + cfg.string() + " --out " + out, dir).code == 0);
    const json report = json::parse(slurp(dir / "out" / "verify.json"));
    CHECK(report.at("pass") == true);
    CHECK(report.at("source").get<std::string>().find("value.csv") != std::string::npos);
    CHECK(slurp(dir / "out" / "residual.csv").rfind("t,x,c,r1,r2\n", 0) == 0);

    // Perturb one interior entry by 1.0.
    std::ifstream in(dir / "out" / "value.csv");
    ValueField v = read_value_csv(in);
    in.close();
    v.at(3, 20, 2) += 1.0;
    std::ofstream(dir / "out" / "value.csv") << [&] {
        std::ostringstream s;
        write_value_csv(s, v);
        return s.str();
    }();
    CHECK(cli("verify --config " + cfg.string() + " --out " + out, dir).code == 5);
    const json failed = json::parse(slurp(dir / "out" / "verify.json"));
    const json& checks = failed.at("checks");
    CHECK((checks.at("monotone_in_c").at("pass") == false || checks.at("residual").at("pass") == false));

    // Corruption on the top control slice is caught by the boundary check.
    v.at(3, 20, 2) -= 1.0;
    v.at(5, 18, 4) += 1.0;
    std::ofstream(dir / "out" / "value.csv") << [&] {
        std::ostringstream s;
        write_value_csv(s, v);
        return s.str();
    }();
    CHECK(cli("verify --config " + cfg.string() + " --out " + out, dir).code == 5);
}

TEST_CASE("verify treats vanishing sandwich gaps as a pass") {
    const fs::path dir = scratch("verify_constant");
    const fs::path cfg = write_config(dir, base("CONSTANT"));
    CHECK(cli("verify --config " + cfg.string() + " --out " + (dir / "out").string(), dir).code == 0);
    const json report = json::parse(slurp(dir / "out" / "verify.json"));
    CHECK(report.at("source") == "solve");
    const json& sandwich = report.at("checks").at("sandwich");
    CHECK(sandwich.at("slope") == "unbounded");
    CHECK(sandwich.at("pass") == true);
}

TEST_CASE("converge reports orders") {
    const fs::path dir = scratch("converge");
    for (const char* model : {"LINEAR_RATE", "CONSTANT"}) {
        const fs::path cfg = write_config(dir, base(model));
        const fs::path out = dir / model;
        CHECK(cli("converge --config " + cfg.string() + " --out " + out.string(), dir).code == 0);
        const json summary = json::parse(slurp(out / "summary.json"));
        CHECK(summary.at("orders") == "exact");
        for (const auto& d : summary.at("sup_diffs")) CHECK(d.get<double>() <= 1e-12);
        const std::string csv = slurp(out / "convergence.csv");
        CHECK(csv.rfind("level,nt,nx,nc,h,dt,dc,sup_diff,order\n", 0) == 0);
        CHECK(csv.find("exact") != std::string::npos);
    }
    json tracking = base("TRACKING");
    tracking["grid"] = {{"nt", 20}, {"nx", 40}, {"nc", 5}, {"x_radius", 6.0}};
    const fs::path cfg = write_config(dir, tracking);
    CHECK(cli("converge --config " + cfg.string() + " --out " + (dir / "tracking").string(), dir).code == 0);
    const json summary = json::parse(slurp(dir / "tracking" / "summary.json"));
    const double order = summary.at("orders").back().get<double>();
    CHECK(order >= 0.7);
    CHECK(order <= 2.5);
}
