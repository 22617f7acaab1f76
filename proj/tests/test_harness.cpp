#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sbrl/error.hpp"
#include "sbrl/harness.hpp"

using namespace sbrl;
using namespace sbrl::harness;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("sbrl_harness_" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<double>> numeric_rows(const fs::path& p) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<double> r;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) r.push_back(std::stod(cell));
        rows.push_back(r);
    }
    return rows;
}

const char* kBandit = R"({"format_version": 1, "kind": "bandit-regret", "seeds": [3, 4],
    "output": "ignored", "workers": 2,
    "env": {"kind": "linear", "arms": 3, "dim": 2, "horizon": 40},
    "agents": ["cts", {"algorithm": "acts", "label": "acts_fast", "refresh_every": 10}, "random", "oracle"]})";

}  // namespace

TEST_CASE("fnv1a matches the published 64-bit test vectors") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("config errors name the offending key") {
    auto message = [](const std::string& text) {
        try {
            parse_experiment(text);
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message("[1]").find("JSON object") != std::string::npos);
    CHECK(message("{").find("not valid JSON") != std::string::npos);
    CHECK(message(R"({"kind": "tournament"})").find("format_version") != std::string::npos);
    CHECK(message(R"({"format_version": 2, "kind": "tournament"})").find("unsupported") != std::string::npos);
    CHECK(message(R"({"format_version": 1, "kind": "nope"})").find("'kind'") != std::string::npos);
    CHECK(message(R"({"format_version": 1, "kind": "tournament", "agents": ["ql", "oracle"], "extra": 1})")
              .find("'extra': unknown key") != std::string::npos);
    CHECK(message(R"({"format_version": 1, "kind": "tournament", "agents": ["ql", "zz"]})").find("agents[1]") !=
          std::string::npos);
    CHECK(message(R"({"format_version": 1, "kind": "bandit-regret", "agents": ["cts"],
                      "env": {"arms": 3, "dmi": 2}})")
              .find("'env.dmi': unknown key") != std::string::npos);
    CHECK(message(R"({"format_version": 1, "kind": "bandit-regret", "agents": ["cts", "cts"], "env": {}})")
              .find("duplicate") != std::string::npos);
    CHECK(message(R"({"format_version": 1, "kind": "backtest", "agents": ["cppi"],
                      "ddpg": {"noise": {"kind": "pink"}}})")
              .find("'ddpg.noise.kind'") != std::string::npos);
    CHECK(message(R"({"format_version": 1, "kind": "backtest", "agents": ["cppi"], "market": {"stocks": 9}})") !=
          "no error");
    CHECK(message(R"({"format_version": 1, "kind": "tournament", "agents": ["ql", "oracle"], "seeds": [1, 1]})")
              .find("duplicate seed") != std::string::npos);
    CHECK(message(R"({"format_version": 1, "kind": "estimate-stable"})").find("input") != std::string::npos);
}

TEST_CASE("seed lists") {
    CHECK(parse_seed_list("3") == std::vector<std::uint64_t>{1, 2, 3});
    CHECK(parse_seed_list("4:6") == std::vector<std::uint64_t>{4, 5, 6});
    CHECK(parse_seed_list("9,2") == std::vector<std::uint64_t>{9, 2});
    CHECK_THROWS_AS(parse_seed_list("0"), ConfigError);
    CHECK_THROWS_AS(parse_seed_list("6:4"), ConfigError);
    CHECK_THROWS_AS(parse_seed_list("1,x"), ConfigError);
    CHECK_THROWS_AS(parse_seed_list("1,1"), ConfigError);
    const auto e = parse_experiment(R"({"format_version": 1, "kind": "tournament", "agents": ["ql", "oracle"],
                                        "seeds": {"first": 10, "count": 3}})");
    CHECK(e.seeds == std::vector<std::uint64_t>{10, 11, 12});
    CHECK(parse_experiment(R"({"format_version": 1, "kind": "tournament", "agents": ["ql", "oracle"]})").seeds ==
          std::vector<std::uint64_t>{1});
}

TEST_CASE("the hash ignores output and workers but not seeds or settings") {
    const auto a = parse_experiment(kBandit);
    std::string other = kBandit;
    other.replace(other.find("\"ignored\""), 9, "\"elsewhere\"");
    other.replace(other.find("\"workers\": 2"), 12, "\"workers\": 1");
    CHECK(config_hash(a) == config_hash(parse_experiment(other)));
    CHECK(config_hash(a).size() == 16);
    auto reseeded = a;
    reseeded.seeds = {3};
    CHECK(config_hash(a) != config_hash(reseeded));
    std::string longer = kBandit;
    longer.replace(longer.find("\"horizon\": 40"), 13, "\"horizon\": 41");
    CHECK(config_hash(a) != config_hash(parse_experiment(longer)));
    CHECK(a.output == "ignored");
    CHECK(a.workers == 2u);
}

TEST_CASE("worker and output precedence: flag, environment, config") {
    auto e = parse_experiment(kBandit);
    RunOptions o;
    ::unsetenv("SBRL_WORKERS");
    ::unsetenv("SBRL_OUT");
    CHECK(resolve_workers(e, o) == 2);
    CHECK(resolve_output(e, o) == "ignored");
    ::setenv("SBRL_WORKERS", "3", 1);
    ::setenv("SBRL_OUT", "from_env", 1);
    CHECK(resolve_workers(e, o) == 3);
    CHECK(resolve_output(e, o) == "from_env");
    o.workers = 5;
    o.output = "from_flag";
    CHECK(resolve_workers(e, o) == 5);
    CHECK(resolve_output(e, o) == "from_flag");
    ::setenv("SBRL_WORKERS", "zero", 1);
    o.workers.reset();
    CHECK_THROWS_AS(resolve_workers(e, o), ConfigError);
    ::unsetenv("SBRL_WORKERS");
    ::unsetenv("SBRL_OUT");
}

TEST_CASE("run_cells isolates failures per index") {
    std::vector<int> done(6, 0);
    const auto errs = run_cells(6, 3, [&](std::size_t i) {
        if (i == 4) throw DomainError("cell four");
        done[i] = 1;
    });
    CHECK(errs[4] == "cell four");
    for (std::size_t i = 0; i < 6; ++i)
        if (i != 4) {
            CHECK(errs[i].empty());
            CHECK(done[i] == 1);
        }
}

TEST_CASE("bandit-regret bundle: traces, aggregates and the output guard") {
    const auto dir = fresh_dir("bandit");
    RunOptions o;
    o.output = dir.string();
    o.workers = 2;
    const auto s = run(parse_experiment(kBandit), o);
    CHECK(s.failures.empty());
    CHECK(s.cells == 8);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(slurp(dir / "traces/acts_fast_seed3.csv").rfind("# config_hash=" + s.hash + " seed=3", 0) == 0);

    // Mean regret recomputed from the per-seed traces.
    const auto t3 = numeric_rows(dir / "traces/cts_seed3.csv");
    const auto t4 = numeric_rows(dir / "traces/cts_seed4.csv");
    const auto agg = numeric_rows(dir / "regret_cts.csv");
    REQUIRE(t3.size() == 40);
    REQUIRE(agg.size() == 40);
    double cum = 0.0;
    for (std::size_t t = 0; t < 40; ++t) {
        cum += t3[t][4] - t3[t][3];
        CHECK(t3[t][5] == doctest::Approx(cum).epsilon(1e-12));
        CHECK(agg[t][1] == doctest::Approx(0.5 * (t3[t][5] + t4[t][5])).epsilon(1e-12));
    }
    for (const auto& row : numeric_rows(dir / "regret_oracle.csv")) CHECK(row[1] == 0.0);

    // Same config reruns in place; another config needs --force.
    CHECK_NOTHROW(run(parse_experiment(kBandit), o));
    std::string other = kBandit;
    other.replace(other.find("\"horizon\": 40"), 13, "\"horizon\": 30");
    CHECK_THROWS_AS(run(parse_experiment(other), o), ConfigError);
    o.force = true;
    const auto forced = run(parse_experiment(other), o);
    CHECK(forced.hash != s.hash);
    CHECK(numeric_rows(dir / "regret_cts.csv").size() == 30);

    // A non-empty directory without a manifest is refused too.
    const auto foreign = fresh_dir("foreign");
    fs::create_directories(foreign);
    std::ofstream(foreign / "notes.txt") << "keep";
    RunOptions f;
    f.output = foreign.string();
    CHECK_THROWS_AS(run(parse_experiment(kBandit), f), ConfigError);
}

TEST_CASE("bayes-regret and estimate-stable bundles") {
    const auto dir = fresh_dir("bayes");
    RunOptions o;
    o.output = (dir / "bayes").string();
    const auto s = run(parse_experiment(R"({"format_version": 1, "kind": "bayes-regret", "runs": 4,
        "env": {"kind": "linear", "arms": 3, "dim": 2, "horizon": 20}, "agents": ["cts", "random"]})"),
                       o);
    CHECK(s.failures.empty());
    const auto rows = numeric_rows(dir / "bayes" / "traces/cts_seed1.csv");
    CHECK(rows.size() == 4);

    fs::create_directories(dir);
    {
        std::ofstream out(dir / "x.txt");
        out << "# header\n";
        for (int i = 0; i < 400; ++i) out << (i % 7) - 3.0 + 0.01 * i << "\n";
    }
    o.output = (dir / "est").string();
    const auto e = run(parse_experiment(R"({"format_version": 1, "kind": "estimate-stable", "input": "x.txt"})",
                                        dir.string()),
                       o);
    CHECK(e.failures.empty());
    CHECK(slurp(dir / "est" / "summary.json").find("\"alpha\"") != std::string::npos);
}

TEST_CASE("read_reals skips comments and names bad lines") {
    const auto dir = fresh_dir("reals");
    fs::create_directories(dir);
    std::ofstream(dir / "ok.txt") << "# c\n1.5\n\n-2\n 3e1 \n";
    CHECK(read_reals((dir / "ok.txt").string()) == std::vector<double>{1.5, -2.0, 30.0});
    std::ofstream(dir / "bad.txt") << "1\nabc\n";
    try {
        read_reals((dir / "bad.txt").string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
    CHECK_THROWS_AS(read_reals((dir / "missing.txt").string()), DataError);
}

TEST_CASE("verify rejects unknown suites and reports in the fixed line format") {
    CHECK_THROWS_AS(verify("nope"), ConfigError);
    const auto res = verify("degeneracy");
    REQUIRE(res.size() == 1);
    CHECK(res[0].pass);
    CHECK(report_line(res[0]).rfind("criterion 5 degeneracy PASS ", 0) == 0);
}
