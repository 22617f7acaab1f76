#include <sstream>

#include "sbrl/error.hpp"
#include "sbrl/ts.hpp"
#include "snapshot.hpp"

namespace sbrl::ts {

namespace {

void check_round(const RoundContext& ctx, std::size_t arms, Eigen::Index dim) {
    if (ctx.arms() != arms || ctx.contexts.cols() != dim) {
        std::ostringstream msg;
        msg << "round is " << ctx.arms() << " x " << ctx.contexts.cols() << ", agent expects " << arms << " x " << dim;
        throw DomainError(msg.str());
    }
}

std::vector<ArmState> fresh_arms(std::size_t arms, std::size_t dim, const TsConfig& cfg) {
    std::vector<ArmState> out(arms);
    for (auto& a : out) {
        a.eta = Vec::Zero(static_cast<Eigen::Index>(dim));
        if (cfg.fixed_belief) {
            const auto& p = *cfg.fixed_belief;
            a.belief = ShapeBelief(p.alpha(), p.beta(), p.sigma());
            a.prior_var = cfg.prior_scale * p.sigma() * p.sigma();
        }
    }
    return out;
}

bool below_quota(const std::vector<ArmState>& arms, std::size_t quota) {
    for (const auto& a : arms)
        if (a.rewards.size() < quota) return true;
    return false;
}

// Warm-up pick: uniform over arms still short of their quota; the weights are
// that choice distribution.
std::size_t warmup_pick(const std::vector<ArmState>& arms, std::size_t quota, Rng& rng, Vec& weights) {
    std::vector<std::size_t> eligible;
    for (std::size_t n = 0; n < arms.size(); ++n)
        if (arms[n].rewards.size() < quota) eligible.push_back(n);
    const auto k = std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng);
    weights = Vec::Zero(static_cast<Eigen::Index>(arms.size()));
    for (auto n : eligible) weights(static_cast<Eigen::Index>(n)) = 1.0 / static_cast<double>(eligible.size());
    return eligible[k];
}

Mat offset_contexts(const Mat& contexts, const std::vector<ArmState>& arms) {
    Mat thetas = contexts;
    for (std::size_t n = 0; n < arms.size(); ++n) thetas.row(static_cast<Eigen::Index>(n)) += arms[n].eta.transpose();
    return thetas;
}

Vec normalised_tail_weights(const std::vector<ArmState>& arms, const Mat& thetas, const Vec& mu, std::size_t chosen) {
    std::vector<ShapeBelief> beliefs;
    beliefs.reserve(arms.size());
    for (const auto& a : arms) beliefs.push_back(a.belief);
    const Vec means = thetas * mu;
    const Vec p = tail_weights(beliefs, means, means(static_cast<Eigen::Index>(chosen)));
    const double total = p.sum();
    if (total > 0.0 && std::isfinite(total)) return p / total;
    Vec w = Vec::Zero(p.size());
    w(static_cast<Eigen::Index>(chosen)) = 1.0;
    return w;
}

void refit(ArmState& arm, const std::vector<double>& residuals, const TsConfig& cfg) {
    arm.belief = fit_belief(residuals);
    arm.prior_var = cfg.prior_scale * arm.belief.sigma() * arm.belief.sigma();
    arm.since_refresh = 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// acts

ActsAgent::ActsAgent(std::size_t arms, std::size_t dim, TsConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      rng_(seed),
      B_(Mat::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))),
      y_(Vec::Zero(static_cast<Eigen::Index>(dim))) {
    cfg_.validate();
    if (arms == 0 || dim == 0) throw ConfigError("acts: arms and dimension must be >= 1");
    arms_ = fresh_arms(arms, dim, cfg_);
}

bool ActsAgent::warming_up() const { return below_quota(arms_, cfg_.warmup_pulls(static_cast<std::size_t>(B_.rows()))); }

std::vector<double> ActsAgent::residuals(const ArmState& arm, const Vec& mu) const {
    std::vector<double> e(arm.rewards.size());
    for (std::size_t s = 0; s < e.size(); ++s) e[s] = arm.rewards[s] - arm.contexts[s].dot(mu);
    return e;
}

void ActsAgent::initialise_beliefs(const Vec& mu) {
    if (!cfg_.fixed_belief)
        for (auto& arm : arms_) refit(arm, residuals(arm, mu), cfg_);
    beliefs_ready_ = true;
}

std::size_t ActsAgent::choose(const RoundContext& ctx) {
    check_round(ctx, arms_.size(), B_.rows());
    if (warming_up()) {
        chosen_ = warmup_pick(arms_, cfg_.warmup_pulls(static_cast<std::size_t>(B_.rows())), rng_, weights_);
        thetas_ = offset_contexts(ctx.contexts, arms_);
    } else {
        const Vec mu = solve_spd(B_, y_);
        // v = 0 scores with mu(t) itself; v > 0 adds a posterior draw of mu.
        const Vec score_mu = cfg_.v > 0.0 ? sample_mvn(mu, B_, cfg_.v, rng_) : mu;
        thetas_ = offset_contexts(ctx.contexts, arms_);
        chosen_ = argmax_score(thetas_, score_mu);
        weights_ = normalised_tail_weights(arms_, thetas_, mu, chosen_);
    }
    last_context_ = ctx.contexts.row(static_cast<Eigen::Index>(chosen_)).transpose();
    pending_ = true;
    return chosen_;
}

void ActsAgent::observe(double reward) {
    if (!pending_) throw DomainError("acts: observe without a pending choice");
    pending_ = false;
    centred_update(B_, y_, thetas_, weights_, chosen_, reward);

    ArmState& arm = arms_[chosen_];
    arm.contexts.push_back(last_context_);
    arm.rewards.push_back(reward);
    ++arm.since_refresh;
    if (warming_up()) return;

    const Vec mu = solve_spd(B_, y_);
    if (!beliefs_ready_) {
        initialise_beliefs(mu);
    } else if (!cfg_.fixed_belief && arm.since_refresh >= cfg_.refresh_every) {
        refit(arm, residuals(arm, mu), cfg_);
    }
    for (auto& a : arms_) {
        const auto e = residuals(a, mu);
        mh_sweep(a.eta, mu, e, a.belief, a.prior_var, cfg_.mh_step, rng_, &stats_);
    }
}

nlohmann::json ActsAgent::snapshot() const {
    if (pending_) throw DomainError("acts: snapshot while a choice is pending");
    auto j = detail::header("acts");
    j["config"] = to_json(cfg_);
    j["rng"] = detail::rng_state(rng_);
    j["B"] = to_json(B_);
    j["y"] = detail::vec_json(y_);
    j["beliefs_ready"] = beliefs_ready_;
    j["arms"] = nlohmann::json::array();
    for (const auto& a : arms_) j["arms"].push_back(detail::arm_json(a));
    return j;
}

std::unique_ptr<ActsAgent> ActsAgent::restore(const nlohmann::json& j) {
    detail::check_header(j, "acts");
    const Mat B = mat_from_json(j.at("B"));
    const auto& arms = j.at("arms");
    auto agent = std::make_unique<ActsAgent>(arms.size(), static_cast<std::size_t>(B.rows()),
                                             config_from_json(j.at("config")), 0);
    agent->B_ = B;
    agent->y_ = detail::vec_from_json(j.at("y"));
    agent->beliefs_ready_ = j.at("beliefs_ready").get<bool>();
    for (std::size_t n = 0; n < arms.size(); ++n) agent->arms_[n] = detail::arm_from_json(arms[n]);
    agent->rng_ = detail::rng_from_state(j.at("rng").get<std::string>());
    return agent;
}

// ---------------------------------------------------------------------------
// sacts

SactsAgent::SactsAgent(std::size_t arms, std::size_t dim, TsConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), rng_(seed) {
    cfg_.validate();
    if (arms == 0 || dim == 0) throw ConfigError("sacts: arms and dimension must be >= 1");
    if (!cfg_.affinity) cfg_.affinity = Mat::Identity(static_cast<Eigen::Index>(cfg_.users), static_cast<Eigen::Index>(cfg_.users));
    for (std::size_t j = 0; j < cfg_.users; ++j) {
        B_.push_back(initial_user_design(dim, cfg_.lambda, (*cfg_.affinity)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j))));
        y_.push_back(Vec::Zero(static_cast<Eigen::Index>(dim)));
    }
    arms_ = fresh_arms(arms, dim, cfg_);
}

std::vector<Vec> SactsAgent::all_mu_bar() const {
    std::vector<Vec> out;
    out.reserve(B_.size());
    for (std::size_t k = 0; k < B_.size(); ++k) out.push_back(solve_spd(B_[k], y_[k]));
    return out;
}

std::vector<double> SactsAgent::residuals(const ArmState& arm, const std::vector<Vec>& mu_bar) const {
    std::vector<double> e(arm.rewards.size());
    for (std::size_t s = 0; s < e.size(); ++s) e[s] = arm.rewards[s] - arm.contexts[s].dot(mu_bar[arm.users[s]]);
    return e;
}

std::size_t SactsAgent::choose(const RoundContext& ctx) {
    check_round(ctx, arms_.size(), B_[0].rows());
    user_ = ctx.user.value_or(0);
    if (user_ >= B_.size()) throw DomainError("sacts: unknown user index");
    const std::size_t quota = cfg_.warmup_pulls(static_cast<std::size_t>(B_[0].rows()));
    if (below_quota(arms_, quota)) {
        chosen_ = warmup_pick(arms_, quota, rng_, weights_);
        thetas_ = offset_contexts(ctx.contexts, arms_);
    } else {
        const auto mu_bar = all_mu_bar();
        const auto est = local_estimate(user_, B_, mu_bar, cfg_.lambda, *cfg_.affinity);
        const Vec score_mu = cfg_.v > 0.0 ? sample_mvn(est.mu_hat, est.gamma, cfg_.v, rng_) : est.mu_hat;
        thetas_ = offset_contexts(ctx.contexts, arms_);
        chosen_ = argmax_score(thetas_, score_mu);
        weights_ = normalised_tail_weights(arms_, thetas_, est.mu_hat, chosen_);
    }
    last_context_ = ctx.contexts.row(static_cast<Eigen::Index>(chosen_)).transpose();
    pending_ = true;
    return chosen_;
}

void SactsAgent::observe(double reward) {
    if (!pending_) throw DomainError("sacts: observe without a pending choice");
    pending_ = false;
    centred_update(B_[user_], y_[user_], thetas_, weights_, chosen_, reward);

    ArmState& arm = arms_[chosen_];
    arm.contexts.push_back(last_context_);
    arm.rewards.push_back(reward);
    arm.users.push_back(user_);
    ++arm.since_refresh;
    if (below_quota(arms_, cfg_.warmup_pulls(static_cast<std::size_t>(B_[0].rows())))) return;

    const auto mu_bar = all_mu_bar();
    if (!beliefs_ready_) {
        if (!cfg_.fixed_belief)
            for (auto& a : arms_) refit(a, residuals(a, mu_bar), cfg_);
        beliefs_ready_ = true;
    } else if (!cfg_.fixed_belief && arm.since_refresh >= cfg_.refresh_every) {
        refit(arm, residuals(arm, mu_bar), cfg_);
    }
    // The offset is projected on the current user's estimate; residuals use
    // each observation's own user.
    const Vec& mu = mu_bar[user_];
    for (auto& a : arms_) {
        const auto e = residuals(a, mu_bar);
        mh_sweep(a.eta, mu, e, a.belief, a.prior_var, cfg_.mh_step, rng_);
    }
}

nlohmann::json SactsAgent::snapshot() const {
    if (pending_) throw DomainError("sacts: snapshot while a choice is pending");
    auto j = detail::header("sacts");
    j["config"] = to_json(cfg_);
    j["rng"] = detail::rng_state(rng_);
    j["B"] = nlohmann::json::array();
    j["y"] = nlohmann::json::array();
    for (std::size_t k = 0; k < B_.size(); ++k) {
        j["B"].push_back(to_json(B_[k]));
        j["y"].push_back(detail::vec_json(y_[k]));
    }
    j["beliefs_ready"] = beliefs_ready_;
    j["arms"] = nlohmann::json::array();
    for (const auto& a : arms_) j["arms"].push_back(detail::arm_json(a));
    return j;
}

std::unique_ptr<SactsAgent> SactsAgent::restore(const nlohmann::json& j) {
    detail::check_header(j, "sacts");
    const Mat B0 = mat_from_json(j.at("B").at(0));
    const auto& arms = j.at("arms");
    auto agent = std::make_unique<SactsAgent>(arms.size(), static_cast<std::size_t>(B0.rows()),
                                              config_from_json(j.at("config")), 0);
    for (std::size_t k = 0; k < agent->B_.size(); ++k) {
        agent->B_[k] = mat_from_json(j.at("B").at(k));
        agent->y_[k] = detail::vec_from_json(j.at("y").at(k));
    }
    agent->beliefs_ready_ = j.at("beliefs_ready").get<bool>();
    for (std::size_t n = 0; n < arms.size(); ++n) agent->arms_[n] = detail::arm_from_json(arms[n]);
    agent->rng_ = detail::rng_from_state(j.at("rng").get<std::string>());
    return agent;
}

}  // namespace sbrl::ts
