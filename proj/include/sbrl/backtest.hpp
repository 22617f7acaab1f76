#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sbrl/market.hpp"
#include "sbrl/rl.hpp"
#include "sbrl/ts.hpp"

namespace sbrl::rl {

struct BacktestConfig {
    market::SynthConfig synth;
    market::MarketConfig market;
    double initial_cash = 100000.0;
    double split_ratio = 0.7;
    std::size_t train_episodes = 10;
    // CPPI floor as a fraction of the starting asset of each episode.
    double cppi_floor = 0.8;
    double cppi_multiplier = 3.0;
    DdpgConfig ddpg;
    DdpgConfig cppi_ddpg = DdpgConfig::cppi_defaults();
    DqnConfig dqn;
    double dqn_step = 0.1;  // weight change of one sell or buy
    std::size_t up_resolution = 10;
    ts::TsConfig ad_ts = [] {
        ts::TsConfig c;
        c.algorithm = "plain_ats";
        return c;
    }();

    void validate() const;
};

/// up, dqn, ddpg, cppi_ddpg, ad-ts, plus the cppi expert and buy_and_hold.
const std::vector<std::string>& strategy_names();
/// UP, DQN, DDPG, CPPI-DDPG, AD-TS, CPPI, Buy&Hold.
std::string strategy_label(const std::string& name);

/// Trains on `train` where the strategy learns, then returns the equity
/// curve over `test` from its second day (the first only seeds features).
/// DDPG-type strategies fill `log` with their training episodes.
std::vector<double> backtest_strategy(const std::string& name, const market::OhlcvSeries& train,
                                      const market::OhlcvSeries& test, const BacktestConfig& cfg,
                                      std::uint64_t seed, std::vector<EpisodeLog>* log = nullptr);

/// Allocation arms of AD-TS: all cash, all in stock d, equal-weight basket.
std::vector<Vec> ad_ts_arms(std::size_t stocks);

struct BacktestRow {
    std::string strategy;
    std::vector<market::Metrics> per_seed;

    double mean_return() const;
    /// Mean over seeds with a defined Sharpe ratio; NaN when none has one.
    double mean_sharpe() const;
    double mean_drawdown() const;
    double median_drawdown() const;
};

/// Columns Strategy, AR, SR, MaxD with percentage cells such as "3.36%".
std::string table3_text(const std::vector<BacktestRow>& rows);
std::string table3_csv(const std::vector<BacktestRow>& rows);

}  // namespace sbrl::rl
