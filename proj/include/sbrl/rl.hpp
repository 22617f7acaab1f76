#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sbrl/linalg.hpp"
#include "sbrl/market.hpp"
#include "sbrl/net.hpp"
#include "sbrl/rng.hpp"

namespace sbrl::rl {

// ---------------------------------------------------------------------------
// Experience replay

struct Experience {
    Vec s;
    Vec a;
    double r = 0.0;
    Vec s_next;
    bool done = false;
    std::optional<Vec> expert;  // a_E at s, when an expert was available
    std::size_t action_index = 0;  // discrete agents only
};

/// Columns are transitions.
struct Batch {
    Mat s, a, s_next;
    Vec r;
    std::vector<bool> done;
    std::vector<std::size_t> action_index;
    std::vector<std::size_t> with_expert;  // columns that carry an expert action
    Mat expert;                            // D x with_expert.size()

    std::size_t size() const { return static_cast<std::size_t>(r.size()); }
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(Experience e);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    const Experience& at(std::size_t i) const { return data_.at(i); }

    /// Distinct indices drawn uniformly without replacement.
    std::vector<std::size_t> sample_indices(std::size_t n, Rng& rng) const;
    Batch sample(std::size_t n, Rng& rng) const;
    Batch gather(const std::vector<std::size_t>& indices) const;

private:
    std::size_t capacity_;
    std::size_t next_ = 0;
    std::vector<Experience> data_;
};

// ---------------------------------------------------------------------------
// Environments

struct VecStep {
    Vec state;
    double reward = 0.0;
    bool done = false;
};

/// Continuous-state environment with actions in [-bound, bound]^D.
class VecEnv {
public:
    virtual ~VecEnv() = default;
    virtual std::size_t state_dim() const = 0;
    virtual std::size_t action_dim() const = 0;
    virtual double action_bound() const { return 1.0; }
    /// Typical reward magnitude; agents with reward_scale = 0 divide by it.
    virtual double reward_unit() const { return 1.0; }
    virtual Vec reset() = 0;
    virtual VecStep step(const Vec& action) = 0;
    /// Expert action at the current state, in the agent's action units.
    virtual std::optional<Vec> expert_action() const { return std::nullopt; }
};

struct DiscreteStep {
    std::size_t state = 0;
    double reward = 0.0;
    bool done = false;
};

class DiscreteEnv {
public:
    virtual ~DiscreteEnv() = default;
    virtual std::size_t states() const = 0;
    virtual std::size_t actions() const = 0;
    virtual std::size_t reset() = 0;
    virtual DiscreteStep step(std::size_t action) = 0;
};

struct MarketEnvConfig {
    market::MarketConfig market;
    double initial_cash = 100000.0;
    double return_scale = 10.0;  // multiplies log returns in the state
    std::optional<market::CppiConfig> cppi;  // enables the expert
    /// Caps post-trade risky exposure at the CPPI exposure.
    bool cppi_guard = false;
};

/// Trading MDP over a price series. Day 0 only seeds the return features;
/// trading starts on day 1. State: per-stock scaled log return, per-stock
/// weight, cash fraction. Action: per-stock weight changes in [-1, 1].
/// Reward: change in total asset.
class MarketEnv : public VecEnv {
public:
    MarketEnv(market::OhlcvSeries series, MarketEnvConfig cfg);

    std::size_t state_dim() const override { return 2 * stocks() + 1; }
    std::size_t action_dim() const override { return stocks(); }
    double reward_unit() const override { return cfg_.initial_cash; }
    Vec reset() override;
    VecStep step(const Vec& action) override;
    std::optional<Vec> expert_action() const override;

    std::size_t stocks() const { return series_.stocks(); }
    std::size_t steps() const { return series_.days() - 2; }
    const MarketEnvConfig& config() const { return cfg_; }
    const market::OhlcvSeries& series() const { return series_; }
    const market::TradingEnv& trading() const { return trading_; }
    const market::PortfolioState& portfolio() const { return trading_.state(); }
    bool done() const { return trading_.done(); }
    Vec observation() const;

    /// Share trades for a weight-change action after the optional guard.
    Vec trades_for(const Vec& action) const;

private:
    market::OhlcvSeries series_;
    MarketEnvConfig cfg_;
    market::TradingEnv trading_;
};

/// Per-stock {sell, hold, buy} with trend buckets {down, flat, up} and
/// `levels` position levels per stock; buy and sell move one level towards
/// the all-in or all-out weight of 1/D.
class DiscreteMarketEnv : public DiscreteEnv {
public:
    DiscreteMarketEnv(MarketEnv env, std::size_t levels);

    std::size_t states() const override;
    std::size_t actions() const override;
    std::size_t reset() override;
    DiscreteStep step(std::size_t action) override;

    const MarketEnv& market() const { return env_; }

private:
    std::size_t encode() const;

    MarketEnv env_;
    std::size_t levels_;
    std::vector<std::size_t> level_;
};

/// Tabular view of a trading environment; anything else is a ConfigError.
std::unique_ptr<DiscreteEnv> discretize(const VecEnv& env, std::size_t levels);

/// Tabular episodic model: outcomes[s * A + a] lists (probability, next,
/// reward). A transition to `states()` terminates.
struct TabularModel {
    struct Outcome {
        double prob = 1.0;
        std::size_t next = 0;
        double reward = 0.0;
    };
    std::size_t states = 0;
    std::size_t actions = 0;
    std::size_t start = 0;
    std::size_t max_steps = 100;
    std::vector<std::vector<Outcome>> outcomes;

    void validate() const;
};

class TabularMdpEnv : public DiscreteEnv {
public:
    TabularMdpEnv(TabularModel model, std::uint64_t seed);
    std::size_t states() const override { return model_.states; }
    std::size_t actions() const override { return model_.actions; }
    std::size_t reset() override;
    DiscreteStep step(std::size_t action) override;

private:
    TabularModel model_;
    Rng rng_;
    std::size_t s_ = 0;
    std::size_t t_ = 0;
};

/// Discounted Q* by value iteration on the model (terminal value 0).
Mat value_iteration(const TabularModel& model, double gamma, double tol = 1e-12);

// ---------------------------------------------------------------------------
// Tabular Q-learning and SARSA

struct TabularConfig {
    bool sarsa = false;
    double alpha = 0.1;
    double gamma = 0.9;
    double epsilon = 0.1;
    void validate() const;
};

class TabularAgent {
public:
    TabularAgent(std::size_t states, std::size_t actions, TabularConfig cfg, std::uint64_t seed);

    /// Runs episodes with epsilon-greedy behaviour; returns per-episode returns.
    std::vector<double> train(DiscreteEnv& env, std::size_t episodes);
    std::size_t greedy(std::size_t s) const;
    std::size_t select(std::size_t s);
    const Mat& q() const { return q_; }
    const TabularConfig& config() const { return cfg_; }

private:
    TabularConfig cfg_;
    Rng rng_;
    Mat q_;
};

// ---------------------------------------------------------------------------
// DDPG and CPPI-DDPG

struct NoiseConfig {
    enum class Kind { gaussian, ou };
    Kind kind = Kind::gaussian;
    double start = 0.3;  // fraction of the action bound
    double end = 0.05;
    std::size_t decay_steps = 10000;
    double ou_theta = 0.15;
};

struct DdpgConfig {
    std::vector<std::size_t> hidden{64, 64};
    double gamma = 0.99;
    double tau = 0.01;
    std::size_t buffer = 100000;
    std::size_t batch = 64;
    double actor_lr = 1e-4;
    double critic_lr = 1e-3;
    double clip_norm = 10.0;
    NoiseConfig noise;
    double reward_scale = 0.0;  // 0: 1 / env.reward_unit()

    double lambda_e = 0.0;  // expert margin weight; cppi_ddpg uses 0.3
    double lambda_c = 0.9;  // TD vs correlation balance for ensembles
    std::size_t ensemble = 1;
    double margin = 1.0;
    double margin_radius = 0.0;  // 0: half the action box width
    std::size_t margin_candidates = 8;
    double candidate_noise = 0.3;  // fraction of the action bound
    std::size_t pretrain_steps = 0;

    double divergence_limit = 1e6;

    static DdpgConfig cppi_defaults();
    /// Throws ConfigError; returns non-fatal warnings.
    std::vector<std::string> validate() const;
};

/// l(a_E, a) = m min(1, |a - a_E| / rho).
double margin(const Vec& expert, const Vec& a, double m, double rho);

/// y = r + gamma Q'(s', pi'(s')) with the bootstrap dropped on terminal rows.
Vec td_targets(const net::Mlp& target_actor, const net::Mlp& target_critic, const Batch& batch, double gamma,
               double bound);

/// Mean of (Q(s, a) - y)^2; adds its gradient to `grad` when given and
/// stores Q(s, a) in `q` when given.
double critic_td_loss(const net::Mlp& critic, const Batch& batch, const Vec& y, net::Params* grad = nullptr,
                      Vec* q = nullptr);

/// J_E averaged over states: max_k [Q(s, c_k) + l(a_E, c_k)] - Q(s, a_E).
/// `candidates[k]` holds candidate k for every state (D x n).
double cppi_margin_loss(const net::Mlp& critic, const Mat& states, const Mat& expert, const std::vector<Mat>& candidates,
                        double m, double rho, net::Params* grad = nullptr);

/// sum_{i<j} Corr(vec a_i, vec a_j)^2; fills d/d a_i when `grads` is given.
double correlation_penalty(const std::vector<Mat>& actions, std::vector<Mat>* grads = nullptr);

/// Gradient of -mean Q(s, bound * pi(s)) plus <extra, action> per column
/// (extra is d/da of any additional action loss, already averaged).
struct ActorGrad {
    net::Params grad;
    double objective = 0.0;  // mean Q(s, pi(s))
    Mat actions;
};
ActorGrad actor_gradient(const net::Mlp& actor, const net::Mlp& critic, const Mat& states, double bound,
                         const Mat* extra = nullptr);

/// Q(s, a) per column; fills dQ/da (D x n) when asked.
using CriticFn = std::function<Vec(const Mat& states, const Mat& actions, Mat* dq_da)>;
ActorGrad actor_gradient(const net::Mlp& actor, const CriticFn& critic, const Mat& states, double bound,
                         const Mat* extra = nullptr);

struct LossReport {
    double td = 0.0;
    double j_e = 0.0;
    double corr = 0.0;
    double actor = 0.0;
    double total = 0.0;  // lambda_c TD + (1 - lambda_c) corr + lambda_e J_E (TD + lambda_e J_E when K = 1)
};

struct EpisodeLog {
    std::size_t episode = 0;
    double ret = 0.0;
    double loss_critic = 0.0;
    double loss_actor = 0.0;
    double j_e = 0.0;
    double corr_penalty = 0.0;
};

class DdpgAgent {
public:
    DdpgAgent(std::size_t state_dim, std::size_t action_dim, double bound, DdpgConfig cfg, std::uint64_t seed);

    /// Ensemble mean action, plus exploration noise when `explore`.
    Vec act(const Vec& s, bool explore = false);
    Vec policy(const Vec& s) const;

    /// One update of every member on `batch`.
    LossReport update(const Batch& batch);
    /// Loss values without touching any parameter.
    LossReport losses(const Batch& batch);

    /// Algorithm loop: explore, store, learn. Optional pre-training on expert
    /// rollouts runs first when pretrain_steps > 0 and the env has an expert.
    std::vector<EpisodeLog> train(VecEnv& env, std::size_t episodes,
                                  const std::function<void(std::size_t, const EpisodeLog&)>& after_episode = {});
    void pretrain(VecEnv& env);

    /// Deterministic rollout; returns the episode return.
    double evaluate(VecEnv& env) const;

    struct Member {
        net::Mlp actor, critic, target_actor, target_critic;
        net::Adam actor_opt, critic_opt;
    };
    const std::vector<Member>& members() const { return members_; }
    std::vector<Member>& members() { return members_; }
    const DdpgConfig& config() const { return cfg_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    ReplayBuffer& buffer() { return buffer_; }
    std::size_t steps() const { return steps_; }

private:
    LossReport compute(const Batch& batch, bool apply);
    double noise_scale() const;
    void reset_noise();

    std::size_t S_, D_;
    double bound_;
    DdpgConfig cfg_;
    std::vector<std::string> warnings_;
    Rng rng_;
    std::vector<Member> members_;
    ReplayBuffer buffer_;
    Vec ou_state_;
    std::size_t steps_ = 0;
    std::size_t episode_ = 0;
    double reward_scale_ = 1.0;
};

// ---------------------------------------------------------------------------
// DQN-lite

struct DqnConfig {
    std::vector<std::size_t> hidden{64, 64};
    double gamma = 0.99;
    double lr = 1e-3;
    std::size_t buffer = 10000;
    std::size_t batch = 32;
    double epsilon_start = 1.0;
    double epsilon_end = 0.05;
    std::size_t epsilon_decay_steps = 5000;
    double tau = 0.01;
    double clip_norm = 10.0;
    double reward_scale = 0.0;
    double divergence_limit = 1e6;
    void validate() const;
};

/// Q-network over a fixed list of actions.
class DqnAgent {
public:
    DqnAgent(std::size_t state_dim, std::vector<Vec> actions, DqnConfig cfg, std::uint64_t seed);

    std::size_t select(const Vec& s, bool explore);
    std::size_t greedy(const Vec& s) const;
    Vec q_values(const Vec& s) const;
    const Vec& action(std::size_t i) const { return actions_.at(i); }
    std::size_t actions() const { return actions_.size(); }

    /// Stores the transition and takes one learning step once the buffer
    /// holds a minibatch. Returns the TD loss (0 before learning starts).
    double observe(const Vec& s, std::size_t a, double r, const Vec& s_next, bool done);

    std::vector<double> train(VecEnv& env, std::size_t episodes);
    double evaluate(VecEnv& env) const;
    double epsilon() const;
    void set_reward_scale(double s) { reward_scale_ = s; }

private:
    std::size_t S_;
    std::vector<Vec> actions_;
    DqnConfig cfg_;
    Rng rng_;
    net::Mlp q_, target_;
    net::Adam opt_;
    ReplayBuffer buffer_;
    std::size_t steps_ = 0;
    double reward_scale_ = 1.0;
};

/// {sell, hold, buy} per stock as weight changes of -step, 0, +step, in
/// mixed-radix order (stock 0 fastest).
std::vector<Vec> sell_hold_buy_actions(std::size_t stocks, double step);

// ---------------------------------------------------------------------------
// Universal Portfolios

/// Every point of the simplex {w >= 0, sum w = 1} over `assets` with
/// coordinates in multiples of 1 / resolution.
std::vector<Vec> simplex_grid(std::size_t assets, std::size_t resolution);

/// Cover's universal portfolio over the constant-rebalanced grid, without
/// transaction costs: A_t = A_0 mean_w prod_s w . x_s with x the close
/// price relatives. Fully invested in stocks from day 0.
std::vector<double> up_run(const market::OhlcvSeries& series, std::size_t resolution, double initial_cash);

}  // namespace sbrl::rl
