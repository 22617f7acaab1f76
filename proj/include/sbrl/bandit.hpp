#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sbrl/linalg.hpp"
#include "sbrl/rng.hpp"
#include "sbrl/stable.hpp"

namespace sbrl::bandit {

using stable::StableParams;

/// What an agent sees at round t. Row i of `contexts` is b_i(t).
struct RoundContext {
    std::size_t t = 0;
    Mat contexts;
    std::optional<std::size_t> user;
    std::optional<std::size_t> stage;

    std::size_t arms() const { return static_cast<std::size_t>(contexts.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(contexts.cols()); }
};

enum class EnvKind { plain, linear, semiparam, adversarial_mdp };

std::string_view to_string(EnvKind kind);
EnvKind parse_env_kind(std::string_view name);

/// Disturbance v(t) shared by all arms in a semi-parametric environment.
struct VProcessSpec {
    enum class Kind { reflected_walk, constant };
    Kind kind = Kind::reflected_walk;
    double initial = 0.0;
    double step = 0.1;
    double bound = 1.0;
};

enum class Adversary { round_robin, greedy };

/// Episodic MDP with stage-independent deterministic transitions and mean
/// rewards. Tables are row-major in (state, action).
struct MdpSpec {
    std::size_t states = 0;
    std::size_t actions = 0;
    std::size_t horizon = 1;
    std::vector<std::size_t> next;
    std::vector<double> reward;
    std::vector<std::size_t> initial_states;
    Adversary adversary = Adversary::round_robin;

    std::size_t index(std::size_t s, std::size_t a) const { return s * actions + a; }
    void validate() const;
};

struct EnvSpec {
    EnvKind kind = EnvKind::linear;
    std::size_t arms = 5;
    std::size_t dim = 10;
    std::size_t horizon = 1000;
    std::size_t users = 1;

    /// Hidden coefficients. Drawn uniformly on the unit sphere when absent
    /// (per user in the semi-parametric case); for `plain` these are the arm
    /// means and the prior is U(0, 1) per arm.
    std::optional<Vec> mu;

    /// Reward noise per arm: empty means noiseless, one entry is shared.
    /// Each law is re-centred so its mean is zero.
    std::vector<StableParams> noise;

    /// Per-coordinate law of freshly drawn contexts.
    StableParams context_law{1.8, 0.3, 1.0, 0.0};
    /// N x d contexts reused every round instead of drawing.
    std::optional<Mat> fixed_contexts;

    std::optional<VProcessSpec> v_process;
    std::optional<MdpSpec> mdp;

    void validate() const;
};

/// Uniform draw on the unit sphere in R^d.
Vec unit_sphere(std::size_t d, Rng& rng);

class Environment {
public:
    Environment(EnvSpec spec, std::uint64_t seed);

    const EnvSpec& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }

    /// Draws the context of the next round and makes it current.
    const RoundContext& next_round();
    const RoundContext& current() const { return ctx_; }

    /// Reward draw for `arm` in the current round.
    double pull(std::size_t arm);

    // Hidden from agents; used for regret accounting and oracles.
    double mean_reward(std::size_t arm) const;
    std::size_t optimal_arm() const;
    double optimal_mean() const;
    const Vec& mu(std::size_t user = 0) const { return mu_.at(user); }
    double disturbance() const { return v_; }

private:
    EnvSpec spec_;
    std::uint64_t seed_;
    Rng context_rng_;
    Rng reward_rng_;
    Rng drift_rng_;
    std::vector<Vec> mu_;
    std::vector<StableParams> centred_noise_;
    RoundContext ctx_;
    double v_ = 0.0;
    bool started_ = false;
};

/// Bandit policy interface. `choose` may be called again without an
/// intervening `observe` (e.g. replay evaluation); `observe` always refers to
/// the most recent choice.
class Agent {
public:
    virtual ~Agent() = default;
    virtual std::string name() const = 0;
    virtual std::size_t choose(const RoundContext& ctx) = 0;
    virtual void observe(double reward) = 0;
};

using AgentFactory = std::function<std::unique_ptr<Agent>(const Environment&, std::uint64_t seed)>;

class RandomAgent : public Agent {
public:
    explicit RandomAgent(std::uint64_t seed) : rng_(seed) {}
    std::string name() const override { return "random"; }
    std::size_t choose(const RoundContext& ctx) override;
    void observe(double) override {}

private:
    Rng rng_;
};

/// Reads the true means from the environment it is bound to.
class OracleAgent : public Agent {
public:
    explicit OracleAgent(const Environment& env) : env_(&env) {}
    std::string name() const override { return "oracle"; }
    std::size_t choose(const RoundContext&) override { return env_->optimal_arm(); }
    void observe(double) override {}

private:
    const Environment* env_;
};

struct RunTrace {
    std::uint64_t seed = 0;
    std::vector<std::size_t> arms;
    std::vector<double> rewards;
    std::vector<double> optimal_means;
    std::vector<double> chosen_means;
    std::vector<Mat> contexts;
    std::vector<std::size_t> users;

    std::size_t size() const { return arms.size(); }
};

/// Plays `rounds` rounds (EnvSpec::horizon when 0).
RunTrace run_bandit(Environment& env, Agent& agent, std::size_t rounds = 0, bool keep_contexts = true);

struct Regret {
    double total = 0.0;
    std::vector<double> prefix;
};

/// Pseudo-regret on true means: sum_t (mu*_t - mu_{a_t, t}).
Regret regret(const RunTrace& trace);

struct BayesRegret {
    double mean = 0.0;
    double std_error = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    std::vector<double> per_run;
};

/// Redraws the hidden parameters from their prior for every run, so any
/// `mu` in the EnvSpec is ignored. Band is mean +- 2 standard errors.
BayesRegret bayes_regret(const EnvSpec& spec, const AgentFactory& factory, std::size_t runs, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Adversarial / MDP-contextual episodes

/// Q^h(s, a) for h = 0..H-1 by backward induction with Q^H = 0.
std::vector<Mat> backward_q(const MdpSpec& mdp);

/// Q^stage(state, action) by enumerating every continuation action sequence.
double enumerate_q(const MdpSpec& mdp, std::size_t stage, std::size_t state, std::size_t action);

MdpSpec parse_mdp_json(const std::string& text);
MdpSpec load_mdp_json(const std::string& path);
std::string mdp_to_json(const MdpSpec& mdp);

class MdpEnvironment {
public:
    /// `noise` follows the EnvSpec convention (empty, one shared, or one per
    /// action); rewards are mean + centred noise.
    MdpEnvironment(MdpSpec mdp, std::vector<StableParams> noise, std::uint64_t seed);

    const MdpSpec& spec() const { return mdp_; }

    /// Starts an episode and returns the initial state x^1. With the greedy
    /// adversary, `agent_action(s)` must report the action the agent would
    /// take in s at the first stage.
    std::size_t begin_episode(const std::function<std::size_t(std::size_t)>& agent_action = {});

    double act(std::size_t action);

    std::size_t state() const { return state_; }
    std::size_t stage() const { return stage_; }
    bool done() const { return stage_ >= mdp_.horizon; }
    std::size_t episode() const { return episode_; }

    const std::vector<Mat>& true_q() const { return q_; }
    double mean_reward(std::size_t s, std::size_t a) const { return mdp_.reward[mdp_.index(s, a)]; }

private:
    MdpSpec mdp_;
    std::vector<StableParams> noise_;
    Rng rng_;
    std::vector<Mat> q_;
    std::size_t state_ = 0;
    std::size_t stage_ = 0;
    std::size_t episode_ = 0;
    bool active_ = false;
};

using MdpPolicy = std::function<std::size_t(std::size_t stage, std::size_t state)>;

struct Episode {
    std::vector<std::size_t> states;
    std::vector<std::size_t> actions;
    std::vector<double> rewards;
    double total = 0.0;
    double expected_total = 0.0;
    double regret = 0.0;
};

/// Plays one episode. Regret is max_a Q^1(x^1, a) minus the expected return
/// of the realised action path.
Episode mdp_episode(MdpEnvironment& env, const MdpPolicy& policy);

/// Builds a fully specified environment from the adversarial_mdp kind.
MdpEnvironment make_mdp_env(const EnvSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Logged recommendation data

struct LoggedEvent {
    std::size_t user = 0;
    std::size_t item = 0;
    double reward = 0.0;
};

struct RecommendationData {
    std::vector<std::string> user_ids;
    std::vector<std::string> item_ids;
    Mat item_features;  // items x d
    std::vector<LoggedEvent> events;

    std::size_t context_dim() const { return user_ids.size() + static_cast<std::size_t>(item_features.cols()); }
    /// One-hot user block followed by the item's features.
    Vec context(std::size_t user, std::size_t item) const;
};

/// Header `user_id,item_id,reward,f1..fd`. Rewards are clicks: any positive
/// value becomes 1.
RecommendationData load_recommendation_csv(const std::string& path);

struct ReplayResult {
    std::size_t events = 0;
    std::size_t matched = 0;
    double total_reward = 0.0;
    double click_rate() const { return matched ? total_reward / static_cast<double>(matched) : 0.0; }
};

/// Offline replay: every logged item is an arm; the agent only learns from
/// events where its choice equals the logged item.
ReplayResult replay_evaluate(const RecommendationData& data, Agent& agent);

}  // namespace sbrl::bandit
