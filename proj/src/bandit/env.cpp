#include <algorithm>
#include <cmath>
#include <sstream>

#include "sbrl/bandit.hpp"
#include "sbrl/error.hpp"

namespace sbrl::bandit {

std::string_view to_string(EnvKind kind) {
    switch (kind) {
        case EnvKind::plain: return "plain";
        case EnvKind::linear: return "linear";
        case EnvKind::semiparam: return "semiparam";
        case EnvKind::adversarial_mdp: return "adversarial_mdp";
    }
    return "?";
}

EnvKind parse_env_kind(std::string_view name) {
    if (name == "plain") return EnvKind::plain;
    if (name == "linear") return EnvKind::linear;
    if (name == "semiparam") return EnvKind::semiparam;
    if (name == "adversarial_mdp") return EnvKind::adversarial_mdp;
    throw SpecError("unknown environment kind '" + std::string(name) + "'");
}

void EnvSpec::validate() const {
    auto fail = [](const std::string& what) { throw SpecError("invalid environment spec: " + what); };
    if (arms == 0) fail("arms must be >= 1");
    if (horizon == 0) fail("horizon must be >= 1");
    if (users == 0) fail("users must be >= 1");
    if (kind != EnvKind::plain && dim == 0) fail("dim must be >= 1");
    if (v_process && kind != EnvKind::semiparam) fail("v_process is only meaningful for the semiparam kind");
    if (users > 1 && kind != EnvKind::semiparam) fail("multiple users require the semiparam kind");
    if (mdp && kind != EnvKind::adversarial_mdp) fail("mdp tables given for a non-MDP kind");
    if (kind == EnvKind::adversarial_mdp) {
        if (!mdp) fail("adversarial_mdp needs mdp tables");
        mdp->validate();
    }
    if (!noise.empty() && noise.size() != 1 && noise.size() != arms) fail("noise must list 0, 1 or N laws");
    const std::size_t d = kind == EnvKind::plain ? arms : dim;
    if (mu) {
        if (static_cast<std::size_t>(mu->size()) != d) fail("mu has the wrong dimension");
        if (!mu->allFinite()) fail("mu must be finite");
    }
    if (fixed_contexts) {
        if (kind == EnvKind::plain) fail("plain bandits have no contexts");
        if (static_cast<std::size_t>(fixed_contexts->rows()) != arms ||
            static_cast<std::size_t>(fixed_contexts->cols()) != dim)
            fail("fixed_contexts must be N x d");
    }
    if (v_process && !(v_process->bound >= 0.0 && v_process->step >= 0.0)) fail("v_process bounds must be >= 0");
}

Vec unit_sphere(std::size_t d, Rng& rng) {
    Vec v(static_cast<Eigen::Index>(d));
    double norm = 0.0;
    do {
        for (auto& x : v) x = std_normal(rng);
        norm = v.norm();
    } while (norm < 1e-12);
    return v / norm;
}

Environment::Environment(EnvSpec spec, std::uint64_t seed)
    : spec_(std::move(spec)),
      seed_(seed),
      context_rng_(derive_seed(seed, 1)),
      reward_rng_(derive_seed(seed, 2)),
      drift_rng_(derive_seed(seed, 3)) {
    spec_.validate();
    if (spec_.kind == EnvKind::adversarial_mdp)
        throw SpecError("adversarial_mdp environments are episodic; use make_mdp_env");
    if (spec_.kind == EnvKind::plain) spec_.dim = spec_.arms;
    if (spec_.kind == EnvKind::semiparam && !spec_.v_process) spec_.v_process = VProcessSpec{};

    Rng param_rng(derive_seed(seed, 0));
    if (spec_.kind == EnvKind::plain) {
        if (spec_.mu) {
            mu_.push_back(*spec_.mu);
        } else {
            Vec means(static_cast<Eigen::Index>(spec_.arms));
            for (auto& m : means) m = uniform01(param_rng);
            mu_.push_back(means);
        }
    } else {
        for (std::size_t u = 0; u < spec_.users; ++u)
            mu_.push_back(spec_.mu ? *spec_.mu : unit_sphere(spec_.dim, param_rng));
    }
    for (const auto& law : spec_.noise) centred_noise_.push_back(law.with_mean(0.0));
    if (spec_.v_process) v_ = spec_.v_process->initial;

    ctx_.contexts = Mat::Zero(static_cast<Eigen::Index>(spec_.arms), static_cast<Eigen::Index>(spec_.dim));
}

const RoundContext& Environment::next_round() {
    if (started_) {
        ++ctx_.t;
        if (spec_.v_process && spec_.v_process->kind == VProcessSpec::Kind::reflected_walk) {
            const auto& vp = *spec_.v_process;
            const double w = vp.step * (2.0 * uniform01(drift_rng_) - 1.0);
            v_ = std::clamp(v_ + w, -vp.bound, vp.bound);
        }
    }
    started_ = true;

    if (spec_.kind == EnvKind::plain) {
        ctx_.contexts.setIdentity();
    } else if (spec_.fixed_contexts) {
        ctx_.contexts = *spec_.fixed_contexts;
    } else {
        for (Eigen::Index i = 0; i < ctx_.contexts.rows(); ++i)
            for (Eigen::Index j = 0; j < ctx_.contexts.cols(); ++j)
                ctx_.contexts(i, j) = stable::sample_one(spec_.context_law, context_rng_);
    }
    if (spec_.kind == EnvKind::semiparam) {
        ctx_.user = spec_.users > 1
                        ? static_cast<std::size_t>(std::uniform_int_distribution<std::size_t>(0, spec_.users - 1)(context_rng_))
                        : 0;
    }
    return ctx_;
}

double Environment::mean_reward(std::size_t arm) const {
    if (arm >= spec_.arms) throw DomainError("arm index out of range");
    const Vec& m = mu_[ctx_.user.value_or(0)];
    double mean = ctx_.contexts.row(static_cast<Eigen::Index>(arm)).dot(m);
    if (spec_.kind == EnvKind::semiparam) mean += v_;
    return mean;
}

std::size_t Environment::optimal_arm() const {
    std::size_t best = 0;
    double best_mean = mean_reward(0);
    for (std::size_t i = 1; i < spec_.arms; ++i) {
        const double m = mean_reward(i);
        if (m > best_mean) {
            best_mean = m;
            best = i;
        }
    }
    return best;
}

double Environment::optimal_mean() const { return mean_reward(optimal_arm()); }

double Environment::pull(std::size_t arm) {
    if (!started_) throw DomainError("pull before the first round was drawn");
    double reward = mean_reward(arm);
    if (!centred_noise_.empty()) {
        const auto& law = centred_noise_.size() == 1 ? centred_noise_[0] : centred_noise_[arm];
        reward += stable::sample_one(law, reward_rng_);
    }
    return reward;
}

std::size_t RandomAgent::choose(const RoundContext& ctx) {
    return std::uniform_int_distribution<std::size_t>(0, ctx.arms() - 1)(rng_);
}

RunTrace run_bandit(Environment& env, Agent& agent, std::size_t rounds, bool keep_contexts) {
    if (rounds == 0) rounds = env.spec().horizon;
    RunTrace trace;
    trace.seed = env.seed();
    trace.arms.reserve(rounds);
    trace.rewards.reserve(rounds);
    trace.optimal_means.reserve(rounds);
    trace.chosen_means.reserve(rounds);
    for (std::size_t t = 0; t < rounds; ++t) {
        const RoundContext& ctx = env.next_round();
        const std::size_t arm = agent.choose(ctx);
        if (arm >= ctx.arms()) {
            std::ostringstream msg;
            msg << agent.name() << " chose arm " << arm << " of " << ctx.arms();
            throw DomainError(msg.str());
        }
        const double r = env.pull(arm);
        if (!std::isfinite(r)) throw NumericError("non-finite reward draw");
        agent.observe(r);
        trace.arms.push_back(arm);
        trace.rewards.push_back(r);
        trace.optimal_means.push_back(env.optimal_mean());
        trace.chosen_means.push_back(env.mean_reward(arm));
        if (keep_contexts) trace.contexts.push_back(ctx.contexts);
        if (ctx.user) trace.users.push_back(*ctx.user);
    }
    return trace;
}

Regret regret(const RunTrace& trace) {
    Regret out;
    out.prefix.reserve(trace.size());
    for (std::size_t t = 0; t < trace.size(); ++t) {
        // Clamped at zero so ties in floating point cannot make the prefix dip.
        out.total += std::max(0.0, trace.optimal_means[t] - trace.chosen_means[t]);
        out.prefix.push_back(out.total);
    }
    return out;
}

BayesRegret bayes_regret(const EnvSpec& spec, const AgentFactory& factory, std::size_t runs, std::uint64_t seed) {
    if (runs < 2) throw SpecError("bayes_regret needs at least 2 runs");
    EnvSpec prior_spec = spec;
    prior_spec.mu.reset();
    BayesRegret out;
    for (std::size_t r = 0; r < runs; ++r) {
        Environment env(prior_spec, derive_seed(seed, 2 * r));
        auto agent = factory(env, derive_seed(seed, 2 * r + 1));
        out.per_run.push_back(regret(run_bandit(env, *agent, 0, false)).total);
    }
    const double n = static_cast<double>(runs);
    double sum = 0.0;
    for (double x : out.per_run) sum += x;
    out.mean = sum / n;
    double ss = 0.0;
    for (double x : out.per_run) ss += (x - out.mean) * (x - out.mean);
    out.std_error = std::sqrt(ss / (n - 1.0) / n);
    out.lower = out.mean - 2.0 * out.std_error;
    out.upper = out.mean + 2.0 * out.std_error;
    return out;
}

}  // namespace sbrl::bandit
