#include "spdelab/errors.hpp"
#include "spdelab/lab.hpp"

#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace spdelab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json simulate_doc() {
    return json::parse(R"({
      "experiment": "simulate", "master_seed": 7, "samples": 20,
      "model": {"kind": "porous_medium", "r": 2.0, "noise": {"family": "constant", "q": 0.6, "b": 1.0},
                "space": {"n_modes": 8}},
      "stepper": {"dt": 0.01},
      "params": {"x0": [0.5], "T": 0.1}
    })");
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("spdelab_test_" + name);
    fs::remove_all(p);
    return p;
}

bool mentions(const std::vector<std::string>& v, const std::string& needle) {
    return std::any_of(v.begin(), v.end(), [&](const std::string& s) { return s.find(needle) != std::string::npos; });
}

}  // namespace

TEST_SUITE("lab") {

TEST_CASE("experiment names round trip") {
    for (auto e : all_experiments()) CHECK(parse_experiment(to_string(e)) == e);
    CHECK(all_experiments().size() == 10);
    CHECK_THROWS_AS(parse_experiment("nope"), ParameterError);
}

TEST_CASE("config round trip and defaults") {
    const auto c = parse_config(simulate_doc());
    CHECK(c.master_seed == 7);
    CHECK(c.params["save_stride"] == 0);
    CHECK(parse_config(serialize(c)) == c);
    CHECK(config_hash(c) == config_hash(parse_config(serialize(c))));
    CHECK(config_hash(c).size() == 64);
    auto d = simulate_doc();
    d["master_seed"] = 8;
    CHECK(config_hash(parse_config(d)) != config_hash(c));
    d = simulate_doc();
    d["output_dir"] = "/tmp/elsewhere";
    CHECK(config_hash(parse_config(d)) == config_hash(c));
}

TEST_CASE("shipped configs parse and round trip") {
    int n = 0;
    for (const auto& entry : fs::directory_iterator(SPDELAB_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        const auto c = load_config(entry.path().string());
        CHECK(parse_config(serialize(c)) == c);
        ++n;
    }
    CHECK(n >= 9);
}

TEST_CASE("validation lists every violation") {
    auto d = simulate_doc();
    d["bogus"] = 1;
    d["model"]["r"] = 0.5;
    d["stepper"]["dt"] = -1.0;
    d["params"]["T"] = -2.0;
    const auto v = validate_config(d);
    CHECK(v.size() >= 4);
    CHECK(mentions(v, "bogus"));
    CHECK(mentions(v, "model"));
    CHECK(mentions(v, "dt"));
    CHECK(mentions(v, "T"));
    try {
        parse_config(d);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.violations() == v);
    }
}

TEST_CASE("fast diffusion condition violation is reported") {
    auto d = json::parse(R"({
      "experiment": "check_conditions", "master_seed": 1,
      "model": {"kind": "fast_diffusion", "r": 0.5, "noise": {"family": "constant", "q": 0.58, "b": 1.0}},
      "params": {"theta": 3.0}
    })");
    CHECK(!validate_config(d).empty());
    d["model"]["noise"]["q"] = 0.52;
    CHECK(validate_config(d).empty());
}

TEST_CASE("coupling exponent constraint is reported") {
    auto d = json::parse(slurp(fs::path(SPDELAB_CONFIG_DIR) / "couple_porous.json"));
    d["coupling"]["alpha"] = 0.5;
    d["coupling"]["epsilon"] = 0.3;
    const auto v = validate_config(d);
    CHECK(mentions(v, "alpha"));
    d = json::parse(slurp(fs::path(SPDELAB_CONFIG_DIR) / "simulate_porous.json"));
    d["coupling"] = json::object();
    CHECK(mentions(validate_config(d), "coupling"));
}

TEST_CASE("exponents experiment") {
    const auto c = load_config(std::string(SPDELAB_CONFIG_DIR) + "/exponents_lemma21.json");
    const auto out = run_experiment(c);
    REQUIRE(out.verdicts.size() == 1);
    CHECK(out.verdicts[0].verdict == Verdict::pass);
    CHECK(std::abs(out.summary["beta"].get<double>() - 0.25) <= 1e-12);
}

TEST_CASE("simulate at T = 0 returns the start") {
    auto d = simulate_doc();
    d["params"]["T"] = 0.0;
    d["params"]["x0"] = json::array();
    const auto out = run_experiment(parse_config(d));
    REQUIRE(!out.table.rows().empty());
    for (const auto& row : out.table.rows())
        for (std::size_t k = 1; k < row.size(); ++k)
            if (out.table.header()[k].rfind("c", 0) == 0) CHECK(std::stod(row[k]) == 0.0);
}

TEST_CASE("csv formatting") {
    CsvTable t({"a", "b"});
    t.add_row({"1", "x,y"});
    t.add_row({"he said \"hi\"", "2"});
    CHECK(t.str() == "a,b\r\n1,\"x,y\"\r\n\"he said \"\"hi\"\"\",2\r\n");
    CHECK_THROWS_AS(t.add_row({"1"}), ShapeError);
    CHECK(std::stod(format_number(0.1)) == 0.1);
    CHECK(std::stod(format_number(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("run writes identical artifacts on rerun and across thread counts") {
    const auto c = parse_config(simulate_doc());
    const auto a = scratch("a"), b = scratch("b");
    auto ra = run(c, RunOptions{1, a.string(), std::nullopt});
    auto rb = run(c, RunOptions{3, b.string(), std::nullopt});
    CHECK(ra.exit_code == 0);
    CHECK(slurp(a / "results.csv") == slurp(b / "results.csv"));
    CHECK(slurp(a / "results.csv").find("\r\n") != std::string::npos);
    const auto m = json::parse(slurp(a / "manifest.json"));
    CHECK(m["status"] == "OK");
    CHECK(m["config_hash"] == config_hash(c));
    CHECK(m["artifact_version"] == std::string(artifact_version));
    CHECK(m["csv_schema_version"] == csv_schema_version);
    CHECK(m["threads"] == 1);
    CHECK(json::parse(slurp(a / "summary.json")).is_object());
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("seed override changes the seed and is recorded") {
    const auto c = parse_config(simulate_doc());
    const auto a = scratch("seed_a"), b = scratch("seed_b");
    run(c, RunOptions{1, a.string(), std::nullopt});
    auto rb = run(c, RunOptions{1, b.string(), 99});
    const auto m = json::parse(slurp(b / "manifest.json"));
    CHECK(m["master_seed"] == 99);
    CHECK(m["seed_source"] != "config");
    CHECK(slurp(a / "results.csv") != slurp(b / "results.csv"));
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("runtime failure is recorded in the manifest") {
    auto d = simulate_doc();
    d["model"]["r"] = 3.0;
    d["params"]["x0"] = json::array({40.0});
    d["stepper"] = json::parse(R"({"dt": 0.5, "dt_min": 0.3, "newton_max_iter": 1})");
    d["params"]["T"] = 1.0;
    const auto dir = scratch("fail");
    const auto r = run(parse_config(d), RunOptions{1, dir.string(), std::nullopt});
    CHECK(r.exit_code == 1);
    const auto m = json::parse(slurp(dir / "manifest.json"));
    CHECK(m["status"] == "FAILED");
    CHECK(!m["error"].get<std::string>().empty());
    CHECK(!fs::exists(dir / "results.csv"));
    fs::remove_all(dir);
}

TEST_CASE("exit codes") {
    CHECK(exit_code_for({{"a", Verdict::pass, ""}, {"b", Verdict::positive, ""}}, false) == 0);
    CHECK(exit_code_for({{"a", Verdict::pass, ""}, {"b", Verdict::inconclusive, ""}}, false) == 2);
    CHECK(exit_code_for({{"a", Verdict::fail, ""}, {"b", Verdict::inconclusive, ""}}, false) == 1);
    CHECK(exit_code_for({}, true) == 1);
}

TEST_CASE("seed from environment") {
    ::setenv("SPDELAB_SEED", "12345", 1);
    CHECK(seed_from_env() == 12345u);
    ::setenv("SPDELAB_SEED", "abc", 1);
    CHECK_THROWS(seed_from_env());
    ::unsetenv("SPDELAB_SEED");
    CHECK(!seed_from_env().has_value());
}

}
