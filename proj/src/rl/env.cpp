#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sbrl/error.hpp"
#include "sbrl/rl.hpp"

namespace sbrl::rl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be >= 1");
    data_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayBuffer::push(Experience e) {
    if (data_.size() < capacity_) {
        data_.push_back(std::move(e));
    } else {
        data_[next_] = std::move(e);
    }
    next_ = (next_ + 1) % capacity_;
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t n, Rng& rng) const {
    if (n > data_.size()) {
        std::ostringstream msg;
        msg << "cannot sample " << n << " transitions from a buffer of " << data_.size();
        throw DomainError(msg.str());
    }
    // Partial Fisher-Yates over the index range.
    std::vector<std::size_t> idx(data_.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(n);
    return idx;
}

Batch ReplayBuffer::sample(std::size_t n, Rng& rng) const { return gather(sample_indices(n, rng)); }

Batch ReplayBuffer::gather(const std::vector<std::size_t>& indices) const {
    Batch b;
    if (indices.empty()) return b;
    const auto n = static_cast<Eigen::Index>(indices.size());
    const auto& first = data_.at(indices.front());
    b.s.resize(first.s.size(), n);
    b.a.resize(first.a.size(), n);
    b.s_next.resize(first.s_next.size(), n);
    b.r.resize(n);
    std::vector<Vec> experts;
    for (Eigen::Index k = 0; k < n; ++k) {
        const auto& e = data_.at(indices[static_cast<std::size_t>(k)]);
        b.s.col(k) = e.s;
        b.a.col(k) = e.a;
        b.s_next.col(k) = e.s_next;
        b.r(k) = e.r;
        b.done.push_back(e.done);
        b.action_index.push_back(e.action_index);
        if (e.expert) {
            b.with_expert.push_back(static_cast<std::size_t>(k));
            experts.push_back(*e.expert);
        }
    }
    b.expert.resize(first.a.size(), static_cast<Eigen::Index>(experts.size()));
    for (std::size_t k = 0; k < experts.size(); ++k) b.expert.col(static_cast<Eigen::Index>(k)) = experts[k];
    return b;
}

// ---------------------------------------------------------------------------
// MarketEnv

MarketEnv::MarketEnv(market::OhlcvSeries series, MarketEnvConfig cfg)
    : series_(std::move(series)),
      cfg_(std::move(cfg)),
      trading_([&] {
          if (series_.days() < 3) throw DataError("a trading environment needs at least three days of prices");
          return market::TradingEnv(series_.slice(1, series_.days()), cfg_.market, cfg_.initial_cash);
      }()) {
    if (cfg_.cppi) cfg_.cppi->validate(cfg_.initial_cash);
    if (cfg_.cppi_guard && !cfg_.cppi) throw ConfigError("cppi_guard needs a cppi configuration");
}

Vec MarketEnv::observation() const {
    const auto D = static_cast<Eigen::Index>(stocks());
    const auto& st = trading_.state();
    const auto day = static_cast<Eigen::Index>(st.t + 1);
    Vec obs(2 * D + 1);
    for (Eigen::Index d = 0; d < D; ++d) {
        const double r = std::log(series_.close(day, d) / series_.close(day - 1, d));
        obs(d) = std::clamp(cfg_.return_scale * r, -5.0, 5.0);
    }
    const double a = st.asset();
    obs.segment(D, D) = market::portfolio_weights(st);
    obs(2 * D) = a > 0.0 ? st.b / a : 0.0;
    return obs;
}

Vec MarketEnv::reset() {
    trading_.reset();
    return observation();
}

Vec MarketEnv::trades_for(const Vec& action) const {
    if (action.size() != static_cast<Eigen::Index>(stocks())) throw DomainError("market action has the wrong size");
    const auto& st = trading_.state();
    Vec q = market::weights_to_trades(st, action.cwiseMax(-1.0).cwiseMin(1.0), cfg_.market);
    if (!cfg_.cppi_guard) return q;
    const Vec after = (st.h + q).cwiseMax(0.0);
    const double risky = after.dot(st.p);
    const double cap = market::cppi_exposure(st.asset(), *cfg_.cppi).value;
    if (risky <= cap || risky <= 0.0) return q;
    Vec target = after * (cap / risky);
    if (!cfg_.market.fractional) target = target.array().floor();
    return target - st.h;
}

VecStep MarketEnv::step(const Vec& action) {
    const auto res = trading_.step(trades_for(action));
    return {observation(), res.reward, trading_.done()};
}

std::optional<Vec> MarketEnv::expert_action() const {
    if (!cfg_.cppi) return std::nullopt;
    const auto& st = trading_.state();
    const double a = st.asset();
    if (!(a > 0.0)) return Vec::Zero(static_cast<Eigen::Index>(stocks()));
    const Vec shares = market::cppi_expert_action(st, *cfg_.cppi, cfg_.market);
    return Vec((shares.cwiseProduct(st.p) / a).cwiseMax(-1.0).cwiseMin(1.0));
}

// ---------------------------------------------------------------------------
// DiscreteMarketEnv

namespace {

constexpr std::size_t kMaxDiscreteStocks = 6;

std::size_t ipow(std::size_t b, std::size_t e) {
    std::size_t r = 1;
    while (e--) r *= b;
    return r;
}

}  // namespace

DiscreteMarketEnv::DiscreteMarketEnv(MarketEnv env, std::size_t levels)
    : env_(std::move(env)), levels_(levels), level_(env_.stocks(), 0) {
    if (levels_ < 2) throw ConfigError("a discretised market needs at least two position levels");
    if (env_.stocks() > kMaxDiscreteStocks) throw ConfigError("tabular trading supports at most 6 stocks");
}

std::size_t DiscreteMarketEnv::states() const { return ipow(3 * levels_, env_.stocks()); }
std::size_t DiscreteMarketEnv::actions() const { return ipow(3, env_.stocks()); }

std::size_t DiscreteMarketEnv::encode() const {
    const Vec obs = env_.observation();
    const double flat = env_.config().market.cost_rate() * env_.config().return_scale;
    std::size_t code = 0;
    for (std::size_t d = env_.stocks(); d-- > 0;) {
        const double r = obs(static_cast<Eigen::Index>(d));
        const std::size_t trend = r < -flat ? 0 : (r > flat ? 2 : 1);
        code = code * 3 * levels_ + trend * levels_ + level_[d];
    }
    return code;
}

std::size_t DiscreteMarketEnv::reset() {
    env_.reset();
    std::fill(level_.begin(), level_.end(), 0);
    return encode();
}

DiscreteStep DiscreteMarketEnv::step(std::size_t action) {
    if (action >= actions()) throw DomainError("discrete market action out of range");
    const auto D = env_.stocks();
    const Vec w = market::portfolio_weights(env_.portfolio());
    Vec delta = Vec::Zero(static_cast<Eigen::Index>(D));
    for (std::size_t d = 0; d < D; ++d, action /= 3) {
        const std::size_t move = action % 3;  // 0 sell, 1 hold, 2 buy
        const std::size_t before = level_[d];
        if (move == 0 && level_[d] > 0) --level_[d];
        if (move == 2 && level_[d] + 1 < levels_) ++level_[d];
        if (level_[d] == before) continue;
        const double target =
            static_cast<double>(level_[d]) / static_cast<double>(levels_ - 1) / static_cast<double>(D);
        delta(static_cast<Eigen::Index>(d)) = target - w(static_cast<Eigen::Index>(d));
    }
    const auto st = env_.step(delta);
    return {encode(), st.reward, st.done};
}

std::unique_ptr<DiscreteEnv> discretize(const VecEnv& env, std::size_t levels) {
    const auto* m = dynamic_cast<const MarketEnv*>(&env);
    if (!m) throw ConfigError("tabular agents need a discretised environment; this environment has no discretiser");
    return std::make_unique<DiscreteMarketEnv>(*m, levels);
}

// ---------------------------------------------------------------------------
// Tabular models

void TabularModel::validate() const {
    if (states == 0 || actions == 0) throw ConfigError("tabular model needs states and actions");
    if (start >= states) throw ConfigError("tabular start state out of range");
    if (outcomes.size() != states * actions) throw ConfigError("tabular model needs outcomes for every (s, a)");
    for (const auto& list : outcomes) {
        if (list.empty()) throw ConfigError("tabular model has an (s, a) without outcomes");
        double total = 0.0;
        for (const auto& o : list) {
            if (o.next > states || !(o.prob >= 0.0)) throw ConfigError("tabular outcome out of range");
            total += o.prob;
        }
        if (std::abs(total - 1.0) > 1e-9) throw ConfigError("tabular outcome probabilities must sum to 1");
    }
}

TabularMdpEnv::TabularMdpEnv(TabularModel model, std::uint64_t seed) : model_(std::move(model)), rng_(seed) {
    model_.validate();
}

std::size_t TabularMdpEnv::reset() {
    s_ = model_.start;
    t_ = 0;
    return s_;
}

DiscreteStep TabularMdpEnv::step(std::size_t action) {
    if (action >= model_.actions) throw DomainError("tabular action out of range");
    const auto& list = model_.outcomes[s_ * model_.actions + action];
    double u = uniform01(rng_);
    const TabularModel::Outcome* o = &list.back();
    for (const auto& c : list) {
        if (u < c.prob) {
            o = &c;
            break;
        }
        u -= c.prob;
    }
    ++t_;
    const bool terminal = o->next == model_.states;
    s_ = terminal ? model_.start : o->next;
    return {s_, o->reward, terminal || t_ >= model_.max_steps};
}

Mat value_iteration(const TabularModel& model, double gamma, double tol) {
    model.validate();
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("value iteration needs gamma in [0, 1)");
    const auto S = static_cast<Eigen::Index>(model.states), A = static_cast<Eigen::Index>(model.actions);
    Mat q = Mat::Zero(S, A);
    for (int iter = 0; iter < 1000000; ++iter) {
        const Vec v = q.rowwise().maxCoeff();
        Mat next(S, A);
        for (Eigen::Index s = 0; s < S; ++s)
            for (Eigen::Index a = 0; a < A; ++a) {
                double total = 0.0;
                for (const auto& o : model.outcomes[static_cast<std::size_t>(s * A + a)])
                    total += o.prob * (o.reward + (o.next < model.states ? gamma * v(static_cast<Eigen::Index>(o.next)) : 0.0));
                next(s, a) = total;
            }
        const double change = (next - q).cwiseAbs().maxCoeff();
        q = std::move(next);
        if (change < tol) break;
    }
    return q;
}

// ---------------------------------------------------------------------------
// Q-learning and SARSA

void TabularConfig::validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("tabular alpha must be in (0, 1]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("tabular gamma must be in [0, 1]");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("tabular epsilon must be in [0, 1]");
}

TabularAgent::TabularAgent(std::size_t states, std::size_t actions, TabularConfig cfg, std::uint64_t seed)
    : cfg_(cfg), rng_(seed) {
    cfg_.validate();
    if (states == 0 || actions == 0) throw ConfigError("tabular agent needs states and actions");
    q_ = Mat::Zero(static_cast<Eigen::Index>(states), static_cast<Eigen::Index>(actions));
}

std::size_t TabularAgent::greedy(std::size_t s) const {
    Eigen::Index best = 0;
    q_.row(static_cast<Eigen::Index>(s)).maxCoeff(&best);
    return static_cast<std::size_t>(best);
}

std::size_t TabularAgent::select(std::size_t s) {
    const auto A = static_cast<std::size_t>(q_.cols());
    if (uniform01(rng_) < cfg_.epsilon) return std::uniform_int_distribution<std::size_t>(0, A - 1)(rng_);
    // Random tie-break so untouched rows do not always pick action 0.
    const auto row = q_.row(static_cast<Eigen::Index>(s));
    const double best = row.maxCoeff();
    std::vector<std::size_t> ties;
    for (std::size_t a = 0; a < A; ++a)
        if (row(static_cast<Eigen::Index>(a)) == best) ties.push_back(a);
    return ties[std::uniform_int_distribution<std::size_t>(0, ties.size() - 1)(rng_)];
}

std::vector<double> TabularAgent::train(DiscreteEnv& env, std::size_t episodes) {
    if (env.states() != static_cast<std::size_t>(q_.rows()) || env.actions() != static_cast<std::size_t>(q_.cols()))
        throw DomainError("tabular agent and environment sizes differ");
    std::vector<double> returns;
    returns.reserve(episodes);
    for (std::size_t ep = 0; ep < episodes; ++ep) {
        std::size_t s = env.reset();
        std::size_t a = select(s);
        double ret = 0.0;
        while (true) {
            const auto st = env.step(a);
            ret += st.reward;
            const auto si = static_cast<Eigen::Index>(s), ai = static_cast<Eigen::Index>(a);
            if (st.done) {
                q_(si, ai) += cfg_.alpha * (st.reward - q_(si, ai));
                break;
            }
            const auto sn = static_cast<Eigen::Index>(st.state);
            std::size_t next = 0;
            double bootstrap = 0.0;
            if (cfg_.sarsa) {
                next = select(st.state);
                bootstrap = q_(sn, static_cast<Eigen::Index>(next));
            } else {
                bootstrap = q_.row(sn).maxCoeff();
            }
            q_(si, ai) += cfg_.alpha * (st.reward + cfg_.gamma * bootstrap - q_(si, ai));
            if (!cfg_.sarsa) next = select(st.state);
            s = st.state;
            a = next;
        }
        returns.push_back(ret);
    }
    return returns;
}

}  // namespace sbrl::rl
