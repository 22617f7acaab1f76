#include <numeric>

#include "sbrl/error.hpp"
#include "sbrl/ts.hpp"
#include "snapshot.hpp"

namespace sbrl::ts {

PlainAtsAgent::PlainAtsAgent(std::size_t arms, TsConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      rng_(seed),
      rewards_(arms),
      beliefs_(arms),
      prior_mean_(arms, 0.0),
      prior_var_(arms, 1.0),
      theta_(arms, 0.0),
      since_refresh_(arms, 0) {
    cfg_.validate();
    if (arms == 0) throw ConfigError("plain_ats: need at least one arm");
    if (cfg_.fixed_belief) {
        const auto& p = *cfg_.fixed_belief;
        for (std::size_t n = 0; n < arms; ++n) {
            beliefs_[n] = ShapeBelief(p.alpha(), p.beta(), p.sigma());
            prior_var_[n] = cfg_.prior_scale * p.sigma() * p.sigma();
        }
    }
}

void PlainAtsAgent::refresh(std::size_t arm) {
    const auto& r = rewards_[arm];
    double centre = r.empty() ? 0.0 : std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
    if (r.size() >= stable::kMinEcfSamples) {
        const auto fit = stable::estimate_ecf(r);
        if (!fit.degenerate) centre = fit.params.mean();
    }
    if (!cfg_.fixed_belief) {
        // The belief is for the centred law, so fit the demeaned rewards.
        std::vector<double> centred(r.size());
        for (std::size_t s = 0; s < r.size(); ++s) centred[s] = r[s] - centre;
        beliefs_[arm] = fit_belief(centred);
        prior_var_[arm] = cfg_.prior_scale * beliefs_[arm].sigma() * beliefs_[arm].sigma();
    }
    prior_mean_[arm] = centre;
    if (r.size() <= cfg_.warmup_pulls(1)) theta_[arm] = centre;
    since_refresh_[arm] = 0;
}

void PlainAtsAgent::set_history(std::size_t arm, std::vector<double> rewards) {
    rewards_.at(arm) = std::move(rewards);
    since_refresh_[arm] = 0;
    refresh(arm);
    theta_[arm] = prior_mean_[arm];
}

std::size_t PlainAtsAgent::choose(const RoundContext& ctx) {
    if (ctx.arms() != rewards_.size()) throw DomainError("plain_ats: arm count mismatch");
    const std::size_t quota = cfg_.warmup_pulls(1);
    std::vector<std::size_t> eligible;
    for (std::size_t n = 0; n < rewards_.size(); ++n)
        if (rewards_[n].size() < quota) eligible.push_back(n);
    if (!eligible.empty()) {
        chosen_ = eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng_)];
    } else {
        chosen_ = 0;
        for (std::size_t n = 0; n < rewards_.size(); ++n) {
            mh_location_step(theta_[n], rewards_[n], beliefs_[n], prior_mean_[n], prior_var_[n], cfg_.mh_step, rng_);
            if (theta_[n] > theta_[chosen_]) chosen_ = n;
        }
    }
    pending_ = true;
    return chosen_;
}

void PlainAtsAgent::observe(double reward) {
    if (!pending_) throw DomainError("plain_ats: observe without a pending choice");
    pending_ = false;
    rewards_[chosen_].push_back(reward);
    ++since_refresh_[chosen_];
    const std::size_t n = rewards_[chosen_].size();
    const std::size_t quota = cfg_.warmup_pulls(1);
    if (n == quota || (n > quota && since_refresh_[chosen_] >= cfg_.refresh_every)) refresh(chosen_);
}

nlohmann::json PlainAtsAgent::snapshot() const {
    if (pending_) throw DomainError("plain_ats: snapshot while a choice is pending");
    auto j = detail::header("plain_ats");
    j["config"] = to_json(cfg_);
    j["rng"] = detail::rng_state(rng_);
    j["arms"] = nlohmann::json::array();
    for (std::size_t n = 0; n < rewards_.size(); ++n) {
        j["arms"].push_back({{"rewards", rewards_[n]},
                             {"belief", detail::belief_json(beliefs_[n])},
                             {"prior_mean", prior_mean_[n]},
                             {"prior_var", prior_var_[n]},
                             {"theta", theta_[n]},
                             {"since_refresh", since_refresh_[n]}});
    }
    return j;
}

std::unique_ptr<PlainAtsAgent> PlainAtsAgent::restore(const nlohmann::json& j) {
    detail::check_header(j, "plain_ats");
    const auto& arms = j.at("arms");
    auto agent = std::make_unique<PlainAtsAgent>(arms.size(), config_from_json(j.at("config")), 0);
    for (std::size_t n = 0; n < arms.size(); ++n) {
        const auto& a = arms[n];
        agent->rewards_[n] = a.at("rewards").get<std::vector<double>>();
        agent->beliefs_[n] = detail::belief_from_json(a.at("belief"));
        agent->prior_mean_[n] = a.at("prior_mean").get<double>();
        agent->prior_var_[n] = a.at("prior_var").get<double>();
        agent->theta_[n] = a.at("theta").get<double>();
        agent->since_refresh_[n] = a.at("since_refresh").get<std::size_t>();
    }
    agent->rng_ = detail::rng_from_state(j.at("rng").get<std::string>());
    return agent;
}

}  // namespace sbrl::ts
