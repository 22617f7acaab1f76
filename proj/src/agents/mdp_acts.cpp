#include <cmath>
#include <numeric>

#include "sbrl/error.hpp"
#include "sbrl/ts.hpp"

namespace sbrl::ts {

MdpActsAgent::MdpActsAgent(std::size_t states, std::size_t actions, std::size_t horizon, MdpActsConfig cfg,
                           std::uint64_t seed)
    : S_(states), A_(actions), H_(horizon), cfg_(std::move(cfg)), rng_(seed) {
    if (S_ == 0 || A_ == 0 || H_ == 0) throw ConfigError("mdp_acts: states, actions and horizon must be >= 1");
    if (!(cfg_.prior_var > 0.0)) throw ConfigError("mdp_acts: prior_var must be > 0");
    if (!(cfg_.mh_step > 0.0)) throw ConfigError("mdp_acts: mh_step must be > 0");
    if (cfg_.refresh_every == 0) throw ConfigError("mdp_acts: refresh_every must be >= 1");
    const std::size_t pairs = S_ * A_;
    rewards_.resize(pairs);
    beliefs_.resize(pairs);
    if (cfg_.fixed_belief) {
        const auto& p = *cfg_.fixed_belief;
        for (auto& b : beliefs_) b = ShapeBelief(p.alpha(), p.beta(), p.sigma());
    }
    theta_.assign(pairs, cfg_.prior_mean);
    since_refresh_.assign(pairs, 0);
    next_.resize(pairs);
    const auto a = static_cast<Eigen::Index>(A_);
    B_.assign(S_, Mat::Identity(a, a));
    y_.assign(S_, Vec::Zero(a));
    refresh_estimates();
}

std::vector<Mat> MdpActsAgent::backward(const std::vector<double>& r) const {
    const auto S = static_cast<Eigen::Index>(S_);
    const auto A = static_cast<Eigen::Index>(A_);
    std::vector<Mat> q(H_, Mat::Zero(S, A));
    Vec value = Vec::Zero(S);  // max_a Q^{h+1}(s, a)
    for (std::size_t h = H_; h-- > 0;) {
        // An unseen transition may lead anywhere, so it gets the best continuation.
        const double optimistic = value.maxCoeff();
        for (Eigen::Index s = 0; s < S; ++s)
            for (Eigen::Index a = 0; a < A; ++a) {
                const auto k = static_cast<std::size_t>(s * A + a);
                const double cont = next_[k] ? value(static_cast<Eigen::Index>(*next_[k])) : optimistic;
                q[h](s, a) = r[k] + cont;
            }
        value = q[h].rowwise().maxCoeff();
    }
    return q;
}

std::vector<Mat> MdpActsAgent::sampled_q() {
    const double prior_sd = std::sqrt(cfg_.prior_var);
    for (std::size_t k = 0; k < theta_.size(); ++k) {
        if (rewards_[k].empty()) {
            theta_[k] = cfg_.prior_mean + prior_sd * std_normal(rng_);
        } else {
            mh_location_step(theta_[k], rewards_[k], beliefs_[k], cfg_.prior_mean, cfg_.prior_var, cfg_.mh_step,
                             rng_);
        }
    }
    return backward(theta_);
}

void MdpActsAgent::refresh_estimates() {
    std::vector<double> means(S_ * A_, cfg_.prior_mean);
    for (std::size_t k = 0; k < means.size(); ++k) {
        const auto& r = rewards_[k];
        if (!r.empty()) means[k] = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
    }
    q_hat_ = backward(means);
}

bandit::Episode MdpActsAgent::run_episode(bandit::MdpEnvironment& env) {
    const auto& spec = env.spec();
    if (spec.states != S_ || spec.actions != A_ || spec.horizon != H_)
        throw DomainError("mdp_acts: environment shape does not match the agent");
    const auto q = sampled_q();
    auto policy = [&q](std::size_t h, std::size_t s) {
        Eigen::Index best = 0;
        q[h].row(static_cast<Eigen::Index>(s)).maxCoeff(&best);
        return static_cast<std::size_t>(best);
    };
    auto ep = bandit::mdp_episode(env, policy);

    const auto A = static_cast<Eigen::Index>(A_);
    const Mat identity = Mat::Identity(A, A);
    for (std::size_t h = 0; h < H_; ++h) {
        const std::size_t s = ep.states[h];
        const std::size_t a = ep.actions[h];
        const std::size_t k = s * A_ + a;
        const double r = ep.rewards[h];
        next_[k] = h + 1 < H_ ? ep.states[h + 1] : env.state();

        std::vector<ShapeBelief> beliefs(beliefs_.begin() + static_cast<std::ptrdiff_t>(s * A_),
                                         beliefs_.begin() + static_cast<std::ptrdiff_t>(s * A_ + A_));
        const Vec means = Eigen::Map<const Vec>(theta_.data() + s * A_, A);
        Vec w = tail_weights(beliefs, means, means(static_cast<Eigen::Index>(a)));
        const double total = w.sum();
        if (total > 0.0 && std::isfinite(total)) {
            w /= total;
        } else {
            w.setZero();
            w(static_cast<Eigen::Index>(a)) = 1.0;
        }
        centred_update(B_[s], y_[s], identity, w, a, r);

        if (rewards_[k].empty()) theta_[k] = r;
        rewards_[k].push_back(r);
        if (!cfg_.fixed_belief && ++since_refresh_[k] >= cfg_.refresh_every) {
            const auto& rs = rewards_[k];
            const double m = std::accumulate(rs.begin(), rs.end(), 0.0) / static_cast<double>(rs.size());
            std::vector<double> centred(rs.size());
            for (std::size_t i = 0; i < rs.size(); ++i) centred[i] = rs[i] - m;
            beliefs_[k] = fit_belief(centred);
            since_refresh_[k] = 0;
        }
    }
    refresh_estimates();
    return ep;
}

std::size_t MdpActsAgent::greedy_action(std::size_t stage, std::size_t state) const {
    if (stage >= H_ || state >= S_) throw DomainError("mdp_acts: stage or state out of range");
    Eigen::Index best = 0;
    q_hat_[stage].row(static_cast<Eigen::Index>(state)).maxCoeff(&best);
    return static_cast<std::size_t>(best);
}

bool MdpActsAgent::fully_visited() const {
    for (const auto& r : rewards_)
        if (r.empty()) return false;
    return true;
}

}  // namespace sbrl::ts
