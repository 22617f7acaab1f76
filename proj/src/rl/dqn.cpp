#include <algorithm>
#include <cmath>
#include <sstream>

#include "sbrl/error.hpp"
#include "sbrl/rl.hpp"

namespace sbrl::rl {

void DqnConfig::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("dqn gamma must be in [0, 1)");
    if (!(lr > 0.0)) throw ConfigError("dqn learning rate must be > 0");
    if (batch == 0 || buffer < batch) throw ConfigError("dqn needs 1 <= batch <= buffer");
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0))
        throw ConfigError("dqn epsilon must be in [0, 1]");
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("dqn tau must be in (0, 1]");
    if (!(reward_scale >= 0.0)) throw ConfigError("reward_scale must be >= 0");
}

namespace {

net::Mlp make_q(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out, std::uint64_t seed) {
    std::vector<std::size_t> sizes{in};
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(out);
    return net::Mlp(sizes, net::Activation::relu, net::Activation::identity, seed);
}

}  // namespace

DqnAgent::DqnAgent(std::size_t state_dim, std::vector<Vec> actions, DqnConfig cfg, std::uint64_t seed)
    : S_(state_dim),
      actions_(std::move(actions)),
      cfg_(std::move(cfg)),
      rng_(seed),
      q_([&] {
          cfg_.validate();
          if (actions_.empty()) throw ConfigError("dqn needs at least one action");
          return make_q(state_dim, cfg_.hidden, actions_.size(), derive_seed(seed, 1));
      }()),
      target_(q_),
      opt_(q_, net::AdamConfig{.lr = cfg_.lr, .clip_norm = cfg_.clip_norm}),
      buffer_(cfg_.buffer) {
    reward_scale_ = cfg_.reward_scale > 0.0 ? cfg_.reward_scale : 1.0;
}

double DqnAgent::epsilon() const {
    if (cfg_.epsilon_decay_steps == 0) return cfg_.epsilon_end;
    const double f = std::min(1.0, static_cast<double>(steps_) / static_cast<double>(cfg_.epsilon_decay_steps));
    return cfg_.epsilon_start + f * (cfg_.epsilon_end - cfg_.epsilon_start);
}

Vec DqnAgent::q_values(const Vec& s) const { return q_.forward(s); }

std::size_t DqnAgent::greedy(const Vec& s) const {
    Eigen::Index best = 0;
    q_values(s).maxCoeff(&best);
    return static_cast<std::size_t>(best);
}

std::size_t DqnAgent::select(const Vec& s, bool explore) {
    if (explore && uniform01(rng_) < epsilon())
        return std::uniform_int_distribution<std::size_t>(0, actions_.size() - 1)(rng_);
    return greedy(s);
}

double DqnAgent::observe(const Vec& s, std::size_t a, double r, const Vec& s_next, bool done) {
    if (a >= actions_.size()) throw DomainError("dqn action index out of range");
    buffer_.push({s, actions_[a], r * reward_scale_, s_next, done, std::nullopt, a});
    ++steps_;
    if (buffer_.size() < cfg_.batch) return 0.0;

    const Batch b = buffer_.sample(cfg_.batch, rng_);
    const Mat q_next = target_.forward(b.s_next);
    net::Mlp::Cache cache;
    const Mat q = q_.forward(b.s, cache);
    const auto n = static_cast<Eigen::Index>(b.size());
    Mat upstream = Mat::Zero(q.rows(), n);
    Vec chosen(n);
    double loss = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto ai = static_cast<Eigen::Index>(b.action_index[static_cast<std::size_t>(k)]);
        double y = b.r(k);
        if (!b.done[static_cast<std::size_t>(k)]) y += cfg_.gamma * q_next.col(k).maxCoeff();
        const double diff = q(ai, k) - y;
        chosen(k) = std::abs(q(ai, k));
        loss += diff * diff;
        upstream(ai, k) = 2.0 * diff / static_cast<double>(n);
    }
    std::vector<double> mags(chosen.data(), chosen.data() + n);
    std::nth_element(mags.begin(), mags.begin() + n / 2, mags.end());
    if (!(mags[static_cast<std::size_t>(n / 2)] <= cfg_.divergence_limit)) {
        std::ostringstream msg;
        msg << "q-network diverged: median |Q| = " << mags[static_cast<std::size_t>(n / 2)] << " after " << steps_
            << " steps";
        throw TrainingDiverged(msg.str());
    }
    opt_.step(q_, q_.backward(cache, upstream));
    net::soft_update(target_, q_, cfg_.tau);
    return loss / static_cast<double>(n);
}

std::vector<double> DqnAgent::train(VecEnv& env, std::size_t episodes) {
    if (env.state_dim() != S_) throw DomainError("dqn agent and environment sizes differ");
    if (cfg_.reward_scale == 0.0) reward_scale_ = 1.0 / env.reward_unit();
    std::vector<double> returns;
    for (std::size_t e = 0; e < episodes; ++e) {
        Vec s = env.reset();
        double ret = 0.0;
        while (true) {
            const std::size_t a = select(s, true);
            const auto st = env.step(actions_[a]);
            observe(s, a, st.reward, st.state, st.done);
            ret += st.reward;
            s = st.state;
            if (st.done) break;
        }
        returns.push_back(ret);
    }
    return returns;
}

double DqnAgent::evaluate(VecEnv& env) const {
    Vec s = env.reset();
    double ret = 0.0;
    while (true) {
        const auto st = env.step(actions_[greedy(s)]);
        ret += st.reward;
        s = st.state;
        if (st.done) break;
    }
    return ret;
}

std::vector<Vec> sell_hold_buy_actions(std::size_t stocks, double step) {
    if (stocks == 0 || stocks > 6) throw ConfigError("sell/hold/buy actions support 1 to 6 stocks");
    std::size_t count = 1;
    for (std::size_t d = 0; d < stocks; ++d) count *= 3;
    std::vector<Vec> out;
    for (std::size_t code = 0; code < count; ++code) {
        Vec a(static_cast<Eigen::Index>(stocks));
        std::size_t c = code;
        for (std::size_t d = 0; d < stocks; ++d, c /= 3)
            a(static_cast<Eigen::Index>(d)) = (static_cast<double>(c % 3) - 1.0) * step;
        out.push_back(a);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Universal Portfolios

std::vector<Vec> simplex_grid(std::size_t assets, std::size_t resolution) {
    if (assets == 0 || resolution == 0) throw ConfigError("simplex grid needs assets and resolution >= 1");
    std::vector<Vec> out;
    std::vector<std::size_t> parts(assets, 0);
    // Enumerate compositions of `resolution` into `assets` parts.
    std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t left) {
        if (out.size() > 1000000) throw ConfigError("simplex grid is too large; lower the resolution");
        if (i + 1 == assets) {
            parts[i] = left;
            Vec w(static_cast<Eigen::Index>(assets));
            for (std::size_t k = 0; k < assets; ++k)
                w(static_cast<Eigen::Index>(k)) = static_cast<double>(parts[k]) / static_cast<double>(resolution);
            out.push_back(w);
            return;
        }
        for (std::size_t v = 0; v <= left; ++v) {
            parts[i] = v;
            rec(i + 1, left - v);
        }
    };
    rec(0, resolution);
    return out;
}

std::vector<double> up_run(const market::OhlcvSeries& series, std::size_t resolution, double initial_cash) {
    if (series.days() == 0) throw DataError("universal portfolio needs prices");
    if (!(initial_cash > 0.0)) throw ConfigError("initial cash must be > 0");
    const auto grid = simplex_grid(series.stocks(), resolution);
    Vec wealth = Vec::Ones(static_cast<Eigen::Index>(grid.size()));
    std::vector<double> equity{initial_cash};
    for (std::size_t t = 1; t < series.days(); ++t) {
        const Vec x = series.close.row(static_cast<Eigen::Index>(t)).cwiseQuotient(
                          series.close.row(static_cast<Eigen::Index>(t - 1))).transpose();
        for (std::size_t g = 0; g < grid.size(); ++g) wealth(static_cast<Eigen::Index>(g)) *= grid[g].dot(x);
        equity.push_back(initial_cash * wealth.mean());
    }
    return equity;
}

}  // namespace sbrl::rl
