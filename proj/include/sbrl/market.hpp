#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sbrl/linalg.hpp"
#include "sbrl/rng.hpp"

namespace sbrl::market {

struct PortfolioState {
    Vec p;           // prices, currency per share
    Vec h;           // holdings, shares (>= 0)
    double b = 0.0;  // cash (>= 0)
    std::size_t t = 0;

    double asset() const { return b + p.dot(h); }
};

struct CppiConfig {
    double floor = 0.0;
    double multiplier = 1.0;
    bool allow_leverage = false;

    /// Throws ConfigError unless 0 <= floor < initial_asset and multiplier >= 0.
    void validate(double initial_asset) const;
};

struct Exposure {
    double value = 0.0;
    bool capped = false;
};

/// E = k max(A - F, 0), capped at A unless leverage is allowed.
Exposure cppi_exposure(double asset, const CppiConfig& cfg);

struct MarketConfig {
    double cost_bps = 10.0;
    bool fractional = true;

    double cost_rate() const { return cost_bps * 1e-4; }
    void validate() const;
};

struct StepResult {
    PortfolioState state;
    double reward = 0.0;  // A(t+1) - A(t)
    Vec executed;         // signed shares actually traded
    double cost = 0.0;
};

/// Trades `action` (signed share quantities) at the current prices, then
/// marks to `next_prices`. Sells execute first and are clipped at holdings;
/// buys are scaled down so cash stays non-negative after costs.
StepResult step(const PortfolioState& state, const Vec& action, const Vec& next_prices, const MarketConfig& cfg);

/// Share trades that move the portfolio to E = cppi_exposure(A) in an
/// equal-weight risky basket and A - E in cash.
Vec cppi_expert_action(const PortfolioState& state, const CppiConfig& cfg, const MarketConfig& market = {});

/// Converts per-stock weight changes (fractions of total asset) into share
/// trades at the current prices.
Vec weights_to_trades(const PortfolioState& state, const Vec& delta_weights, const MarketConfig& market = {});

/// Current per-stock weights h_d p_d / A.
Vec portfolio_weights(const PortfolioState& state);

// ---------------------------------------------------------------------------
// Data

/// Aligned daily bars, rows are days and columns are tickers.
struct OhlcvSeries {
    std::vector<std::string> dates;  // ISO yyyy-mm-dd, strictly increasing
    std::vector<std::string> tickers;
    Mat open, high, low, close, volume;

    std::size_t days() const { return dates.size(); }
    std::size_t stocks() const { return tickers.size(); }
    OhlcvSeries slice(std::size_t begin, std::size_t end) const;
};

/// Long-format CSV with header `date,ticker,open,high,low,close,volume`.
OhlcvSeries load_ohlcv(const std::string& path);
void save_ohlcv(const OhlcvSeries& series, const std::string& path);

struct Split {
    OhlcvSeries train;
    OhlcvSeries test;
    std::optional<std::string> warning;
};

/// Chronological split: the first ceil(ratio * T) days train.
Split split(const OhlcvSeries& series, double ratio = 0.7);

/// Inclusive ISO date ranges for train and test.
Split split_by_dates(const OhlcvSeries& series, const std::string& train_from, const std::string& train_to,
                     const std::string& test_from, const std::string& test_to);

struct SynthConfig {
    std::size_t stocks = 2;
    std::size_t days = 252;
    double drift = 0.05;        // annual
    double volatility = 0.2;    // annual
    double correlation = 0.3;   // pairwise, through one common factor
    std::optional<double> stable_alpha;  // alpha-stable innovations when set
    double max_loss = 0.95;     // single-day simple return floor is -max_loss
    double initial_price = 100.0;
    std::string start_date = "2018-01-01";
    double periods_per_year = 252.0;  // bars per year; dt = 1 / periods_per_year
};

/// Simple daily returns drift dt + vol sqrt(dt) X with X built from a common
/// and an idiosyncratic innovation. Deterministic per seed.
OhlcvSeries synth_market(const SynthConfig& cfg, std::uint64_t seed);

/// Series with the given closes (rows are bars), open = previous close, one
/// weekday per bar from `start_date`.
OhlcvSeries series_from_closes(const Mat& close, const std::string& start_date = "2018-01-01");

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
    double annual_return = 0.0;
    std::optional<double> sharpe;  // empty when daily returns have zero variance
    double max_drawdown = 0.0;
};

Metrics metrics(const std::vector<double>& equity, double periods_per_year = 252.0);

std::vector<double> daily_returns(const std::vector<double>& equity);

// ---------------------------------------------------------------------------
// Episode driver

/// Walks a price series with a portfolio, keeping the fill log so the asset
/// path can be recomputed from scratch.
class TradingEnv {
public:
    TradingEnv(OhlcvSeries series, MarketConfig cfg, double initial_cash);

    const OhlcvSeries& series() const { return series_; }
    const MarketConfig& config() const { return cfg_; }
    double initial_cash() const { return initial_cash_; }

    const PortfolioState& reset();
    const PortfolioState& state() const { return state_; }
    bool done() const { return state_.t + 1 >= series_.days(); }

    /// Trades at day t close and advances to day t + 1.
    StepResult step(const Vec& action);

    const std::vector<double>& equity() const { return equity_; }
    const std::vector<Vec>& fills() const { return fills_; }
    const std::vector<double>& costs() const { return costs_; }

    /// Asset path rebuilt from the initial cash and the fill log alone.
    std::vector<double> replay_equity() const;

private:
    OhlcvSeries series_;
    MarketConfig cfg_;
    double initial_cash_;
    PortfolioState state_;
    std::vector<double> equity_;
    std::vector<Vec> fills_;
    std::vector<double> costs_;
};

}  // namespace sbrl::market
