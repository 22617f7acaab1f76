#include "sbrl/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include "sbrl/error.hpp"

namespace sbrl::rl {

namespace {

MarketEnvConfig env_config(const BacktestConfig& cfg, bool cppi, bool guard) {
    MarketEnvConfig e;
    e.market = cfg.market;
    e.initial_cash = cfg.initial_cash;
    if (cppi) e.cppi = market::CppiConfig{cfg.cppi_floor * cfg.initial_cash, cfg.cppi_multiplier, false};
    e.cppi_guard = guard;
    return e;
}

template <class Policy>
std::vector<double> rollout(MarketEnv& env, Policy&& policy) {
    Vec s = env.reset();
    while (!env.done()) s = env.step(policy(s)).state;
    return env.trading().equity();
}

std::vector<double> run_ad_ts(const market::OhlcvSeries& train, const market::OhlcvSeries& test,
                              const BacktestConfig& cfg, std::uint64_t seed) {
    const auto arms = ad_ts_arms(train.stocks());
    auto agent = ts::make_agent(cfg.ad_ts, arms.size(), 1, seed);
    bandit::RoundContext ctx;
    ctx.contexts = Mat::Zero(static_cast<Eigen::Index>(arms.size()), 1);
    // Learns online through the training days, then keeps learning on test.
    auto pass = [&](const market::OhlcvSeries& series) {
        MarketEnv env(series, env_config(cfg, false, false));
        env.reset();
        while (!env.done()) {
            const double before = env.portfolio().asset();
            const std::size_t k = agent->choose(ctx);
            const Vec delta = arms[k] - market::portfolio_weights(env.portfolio());
            const auto st = env.step(delta);
            agent->observe(before > 0.0 ? 100.0 * st.reward / before : 0.0);
            ++ctx.t;
        }
        return env.trading().equity();
    };
    pass(train);
    return pass(test);
}

double median(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string pct(double x) {
    if (!std::isfinite(x)) return "n/a";
    std::ostringstream os;
    os << std::fixed << std::setprecision(2) << 100.0 * x << '%';
    return os.str();
}

}  // namespace

void BacktestConfig::validate() const {
    market.validate();
    if (!(initial_cash > 0.0)) throw ConfigError("initial_cash must be > 0");
    if (!(split_ratio > 0.0 && split_ratio < 1.0)) throw ConfigError("split_ratio must lie in (0, 1)");
    if (!(cppi_floor >= 0.0 && cppi_floor < 1.0)) throw ConfigError("cppi_floor must lie in [0, 1)");
    if (!(cppi_multiplier >= 0.0)) throw ConfigError("cppi_multiplier must be >= 0");
    if (!(dqn_step > 0.0 && dqn_step <= 1.0)) throw ConfigError("dqn_step must lie in (0, 1]");
    if (up_resolution == 0) throw ConfigError("up_resolution must be >= 1");
    if (synth.stocks == 0 || synth.stocks > 6) throw ConfigError("backtests support 1 to 6 stocks");
    ddpg.validate();
    cppi_ddpg.validate();
    dqn.validate();
    ad_ts.validate();
    if (ad_ts.algorithm != "plain_ats") throw ConfigError("ad-ts runs the plain_ats algorithm");
}

const std::vector<std::string>& strategy_names() {
    static const std::vector<std::string> names{"up", "dqn", "ddpg", "cppi_ddpg", "ad-ts", "cppi", "buy_and_hold"};
    return names;
}

std::string strategy_label(const std::string& name) {
    if (name == "up") return "UP";
    if (name == "dqn") return "DQN";
    if (name == "ddpg") return "DDPG";
    if (name == "cppi_ddpg") return "CPPI-DDPG";
    if (name == "ad-ts") return "AD-TS";
    if (name == "cppi") return "CPPI";
    if (name == "buy_and_hold") return "Buy&Hold";
    throw ConfigError("unknown backtest strategy: " + name);
}

std::vector<Vec> ad_ts_arms(std::size_t stocks) {
    const auto D = static_cast<Eigen::Index>(stocks);
    std::vector<Vec> arms{Vec::Zero(D)};
    for (Eigen::Index d = 0; d < D; ++d) {
        Vec w = Vec::Zero(D);
        w(d) = 1.0;
        arms.push_back(w);
    }
    if (D > 1) arms.push_back(Vec::Constant(D, 1.0 / static_cast<double>(D)));
    return arms;
}

std::vector<double> backtest_strategy(const std::string& name, const market::OhlcvSeries& train,
                                      const market::OhlcvSeries& test, const BacktestConfig& cfg,
                                      std::uint64_t seed, std::vector<EpisodeLog>* log) {
    if (train.stocks() != test.stocks()) throw DataError("train and test series hold different stocks");
    const std::size_t D = test.stocks();
    if (name == "up") return up_run(test.slice(1, test.days()), cfg.up_resolution, cfg.initial_cash);
    if (name == "buy_and_hold") {
        MarketEnv env(test, env_config(cfg, false, false));
        const Vec basket = Vec::Constant(static_cast<Eigen::Index>(D), 1.0 / static_cast<double>(D));
        bool first = true;
        return rollout(env, [&](const Vec&) {
            const Vec a = first ? basket : Vec::Zero(static_cast<Eigen::Index>(D));
            first = false;
            return a;
        });
    }
    if (name == "cppi") {
        MarketEnv env(test, env_config(cfg, true, false));
        return rollout(env, [&](const Vec&) { return *env.expert_action(); });
    }
    if (name == "dqn") {
        DqnAgent agent(2 * D + 1, sell_hold_buy_actions(D, cfg.dqn_step), cfg.dqn, seed);
        MarketEnv learn(train, env_config(cfg, false, false));
        agent.train(learn, cfg.train_episodes);
        MarketEnv env(test, env_config(cfg, false, false));
        return rollout(env, [&](const Vec& s) { return agent.action(agent.greedy(s)); });
    }
    if (name == "ddpg" || name == "cppi_ddpg") {
        const bool cppi = name == "cppi_ddpg";
        DdpgAgent agent(2 * D + 1, D, 1.0, cppi ? cfg.cppi_ddpg : cfg.ddpg, seed);
        MarketEnv learn(train, env_config(cfg, cppi, cppi));
        auto logs = agent.train(learn, cfg.train_episodes);
        if (log) *log = std::move(logs);
        MarketEnv env(test, env_config(cfg, cppi, cppi));
        return rollout(env, [&](const Vec& s) { return agent.policy(s); });
    }
    if (name == "ad-ts") return run_ad_ts(train, test, cfg, seed);
    throw ConfigError("unknown backtest strategy: " + name);
}

double BacktestRow::mean_return() const {
    double s = 0.0;
    for (const auto& m : per_seed) s += m.annual_return;
    return per_seed.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(per_seed.size());
}

double BacktestRow::mean_sharpe() const {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& m : per_seed)
        if (m.sharpe) {
            s += *m.sharpe;
            ++n;
        }
    return n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

double BacktestRow::mean_drawdown() const {
    double s = 0.0;
    for (const auto& m : per_seed) s += m.max_drawdown;
    return per_seed.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(per_seed.size());
}

double BacktestRow::median_drawdown() const {
    std::vector<double> v;
    for (const auto& m : per_seed) v.push_back(m.max_drawdown);
    return median(std::move(v));
}

std::string table3_text(const std::vector<BacktestRow>& rows) {
    std::vector<std::vector<std::string>> cells{{"Strategy", "AR", "SR", "MaxD"}};
    for (const auto& r : rows)
        cells.push_back({strategy_label(r.strategy), pct(r.mean_return()), pct(r.mean_sharpe()),
                         pct(r.mean_drawdown())});
    std::vector<std::size_t> width(4, 0);
    for (const auto& row : cells)
        for (std::size_t c = 0; c < 4; ++c) width[c] = std::max(width[c], row[c].size());
    std::ostringstream os;
    for (const auto& row : cells) {
        for (std::size_t c = 0; c < 4; ++c) {
            os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
            if (c < 3) os << "  ";
        }
        os << '\n';
    }
    return os.str();
}

std::string table3_csv(const std::vector<BacktestRow>& rows) {
    std::ostringstream os;
    os << "Strategy,AR,SR,MaxD\n";
    for (const auto& r : rows)
        os << strategy_label(r.strategy) << ',' << pct(r.mean_return()) << ',' << pct(r.mean_sharpe()) << ','
           << pct(r.mean_drawdown()) << '\n';
    return os.str();
}

}  // namespace sbrl::rl
