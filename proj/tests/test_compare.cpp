#include <doctest.h>

#include <cmath>
#include <regex>
#include <sstream>

#include "sbrl/backtest.hpp"
#include "sbrl/error.hpp"
#include "sbrl/tournament.hpp"

using namespace sbrl;
using namespace sbrl::rl;

namespace {

std::vector<std::vector<std::string>> csv_cells(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> row;
        std::istringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) row.push_back(c);
        rows.push_back(row);
    }
    return rows;
}

TournamentConfig small_tournament() {
    TournamentConfig c;
    c.rounds = 6;
    c.episodes = 30;
    return c;
}

}  // namespace

TEST_CASE("self-play ties 50:50") {
    for (const auto& name : player_names()) {
        CAPTURE(name);
        const auto res = tournament({name, name}, small_tournament());
        CHECK(res.wins(0, 1) == 0.5);
        CHECK(res.wins(1, 0) == 0.5);
        CHECK(res.returns.col(0) == res.returns.col(1));
    }
}

TEST_CASE("oracle beats random by at least 95:5 over 100 rounds") {
    TournamentConfig c;
    c.rounds = 100;
    c.episodes = 20;
    const auto res = tournament({"oracle", "random"}, c);
    CHECK(res.wins(0, 1) >= 0.95);
    CHECK(res.wins(0, 1) + res.wins(1, 0) == doctest::Approx(1.0));
}

TEST_CASE("tournament results do not depend on the worker count") {
    const std::vector<std::string> agents{"ql", "cb-ts", "random"};
    const auto a = tournament(agents, small_tournament(), 1);
    const auto b = tournament(agents, small_tournament(), 3);
    CHECK(a.returns == b.returns);
    CHECK(a.table_csv() == b.table_csv());
}

TEST_CASE("tournament table layout") {
    const std::vector<std::string> agents{"ql", "dqn", "sarsa", "cb-ts", "ac-ts"};
    auto c = small_tournament();
    c.rounds = 4;
    c.episodes = 10;
    const auto res = tournament(agents, c);
    const auto rows = csv_cells(res.table_csv());
    REQUIRE(rows.size() == 7);
    CHECK(rows[0] == std::vector<std::string>{"RL", "QL", "DQL", "SARSA", "CB-TS", "AC-TS"});
    const std::regex cell(R"(\d{1,3}:\d{1,3})");
    for (std::size_t i = 1; i <= 5; ++i) {
        REQUIRE(rows[i].size() == 6);
        CHECK(rows[i][0] == rows[0][i]);
        for (std::size_t j = 1; j <= 5; ++j) {
            if (i == j) {
                CHECK(rows[i][j] == "-");
                continue;
            }
            REQUIRE(std::regex_match(rows[i][j], cell));
            const auto colon = rows[i][j].find(':');
            CHECK(std::stoi(rows[i][j].substr(0, colon)) + std::stoi(rows[i][j].substr(colon + 1)) == 100);
            // Mirror cell reads the other way round.
            CHECK(rows[j][i] == rows[i][j].substr(colon + 1) + ":" + rows[i][j].substr(0, colon));
        }
    }
    CHECK(rows[6][0] == "avg wins(%)");
    double total = 0.0;
    for (std::size_t j = 1; j <= 5; ++j) total += std::stod(rows[6][j]);
    // Each pair's shares sum to one, so the averages sum to 100 N / 2 up to rounding.
    CHECK(std::abs(total - 250.0) <= 0.3);

    const auto text = res.table_text();
    CHECK(text.rfind("RL", 0) == 0);
    CHECK(text.find("avg wins(%)") != std::string::npos);
}

TEST_CASE("tournament configuration errors") {
    CHECK_THROWS_AS(tournament({"ql"}, small_tournament()), ConfigError);
    CHECK_THROWS_AS(tournament({"ql", "nope"}, small_tournament()), ConfigError);
    auto c = small_tournament();
    c.actions = 1;
    CHECK_THROWS_AS(tournament({"ql", "random"}, c), ConfigError);
}

TEST_CASE("random MDPs are valid and start anywhere") {
    Rng rng(4);
    const auto m = random_mdp(5, 3, 4, bandit::Adversary::greedy, rng);
    CHECK(m.next.size() == 15);
    CHECK(m.initial_states.size() == 5);
    for (double r : m.reward) CHECK((r >= 0.0 && r <= 1.0));
}

TEST_CASE("backtest strategies on a short synthetic market") {
    BacktestConfig cfg;
    cfg.synth.days = 120;
    cfg.train_episodes = 2;
    cfg.cppi_ddpg.pretrain_steps = 100;
    cfg.validate();
    const auto series = market::synth_market(cfg.synth, 3);
    const auto sp = market::split(series, cfg.split_ratio);
    const std::size_t expected = sp.test.days() - 1;
    for (const auto& name : strategy_names()) {
        CAPTURE(name);
        const auto eq = backtest_strategy(name, sp.train, sp.test, cfg, 5);
        CHECK(eq.size() == expected);
        CHECK(eq.front() == cfg.initial_cash);
        for (double v : eq) CHECK(std::isfinite(v));
    }
    // Same seed, same curve.
    CHECK(backtest_strategy("ddpg", sp.train, sp.test, cfg, 5) == backtest_strategy("ddpg", sp.train, sp.test, cfg, 5));
    CHECK_THROWS_AS(backtest_strategy("nope", sp.train, sp.test, cfg, 5), ConfigError);
}

TEST_CASE("cppi strategy keeps the floor on a falling market") {
    BacktestConfig cfg;
    Mat close(40, 2);
    for (Eigen::Index t = 0; t < 40; ++t) {
        close(t, 0) = 100.0 * std::pow(0.95, static_cast<double>(t));
        close(t, 1) = 100.0 * std::pow(0.97, static_cast<double>(t));
    }
    const auto s = market::series_from_closes(close);
    const auto eq = backtest_strategy("cppi", s, s, cfg, 1);
    for (double v : eq) CHECK(v >= cfg.cppi_floor * cfg.initial_cash);
}

TEST_CASE("buy and hold invests once") {
    BacktestConfig cfg;
    cfg.market.cost_bps = 0.0;
    Mat close(5, 2);
    close << 10, 20, 11, 20, 12, 18, 11, 22, 13, 24;
    const auto s = market::series_from_closes(close);
    const auto eq = backtest_strategy("buy_and_hold", s, s, cfg, 1);
    // Half the cash in each stock at day-1 closes (11, 20).
    const double h0 = 50000.0 / 11.0, h1 = 50000.0 / 20.0;
    REQUIRE(eq.size() == 4);
    CHECK(eq[1] == doctest::Approx(h0 * 12 + h1 * 18));
    CHECK(eq[3] == doctest::Approx(h0 * 13 + h1 * 24));
}

TEST_CASE("ad-ts arms and table3 layout") {
    const auto arms = ad_ts_arms(3);
    REQUIRE(arms.size() == 5);
    CHECK(arms[0].sum() == 0.0);
    CHECK(arms[2](1) == 1.0);
    CHECK(arms[4].sum() == doctest::Approx(1.0));
    CHECK(ad_ts_arms(1).size() == 2);

    std::vector<BacktestRow> rows{{"ddpg", {{0.05, 0.3, 0.048}, {0.07, 0.5, 0.02}, {0.01, 0.1, 0.03}}},
                                  {"cppi_ddpg", {{0.02, std::nullopt, 0.0}}}};
    CHECK(rows[0].median_drawdown() == 0.03);
    const auto cells = csv_cells(table3_csv(rows));
    REQUIRE(cells.size() == 3);
    CHECK(cells[0] == std::vector<std::string>{"Strategy", "AR", "SR", "MaxD"});
    CHECK(cells[1] == std::vector<std::string>{"DDPG", "4.33%", "30.00%", "3.27%"});
    CHECK(cells[2] == std::vector<std::string>{"CPPI-DDPG", "2.00%", "n/a", "0.00%"});
    CHECK(table3_text(rows).rfind("Strategy", 0) == 0);
}
