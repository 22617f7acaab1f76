#include <sstream>

#include "sbrl/error.hpp"
#include "sbrl/ts.hpp"
#include "snapshot.hpp"

namespace sbrl::ts {

namespace {

void check_context(const RoundContext& ctx, Eigen::Index dim) {
    if (ctx.arms() == 0) throw DomainError("round has no arms");
    if (ctx.contexts.cols() != dim) {
        std::ostringstream msg;
        msg << "context dimension " << ctx.contexts.cols() << " does not match agent dimension " << dim;
        throw DomainError(msg.str());
    }
}

}  // namespace

CtsAgent::CtsAgent(std::size_t dim, TsConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      rng_(seed),
      B_(Mat::Identity(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim))),
      y_(Vec::Zero(static_cast<Eigen::Index>(dim))) {
    cfg_.validate();
    if (dim == 0) throw ConfigError("cts: dimension must be >= 1");
}

std::size_t CtsAgent::choose(const RoundContext& ctx) {
    check_context(ctx, B_.rows());
    const Vec mu = solve_spd(B_, y_);
    const Vec draw = sample_mvn(mu, B_, cfg_.v, rng_);
    chosen_ = argmax_score(ctx.contexts, draw);
    pi_ = selection_probabilities(ctx.contexts, mu, B_, cfg_.v, cfg_.pi_samples, rng_);
    ctx_ = ctx.contexts;
    pending_ = true;
    return chosen_;
}

void CtsAgent::observe(double reward) {
    if (!pending_) throw DomainError("cts: observe without a pending choice");
    pending_ = false;
    centred_update(B_, y_, ctx_, pi_, chosen_, reward);
}

nlohmann::json CtsAgent::snapshot() const {
    if (pending_) throw DomainError("cts: snapshot while a choice is pending");
    auto j = detail::header("cts");
    j["config"] = to_json(cfg_);
    j["rng"] = detail::rng_state(rng_);
    j["B"] = to_json(B_);
    j["y"] = detail::vec_json(y_);
    return j;
}

std::unique_ptr<CtsAgent> CtsAgent::restore(const nlohmann::json& j) {
    detail::check_header(j, "cts");
    const Mat B = mat_from_json(j.at("B"));
    auto agent = std::make_unique<CtsAgent>(static_cast<std::size_t>(B.rows()), config_from_json(j.at("config")), 0);
    agent->B_ = B;
    agent->y_ = detail::vec_from_json(j.at("y"));
    agent->rng_ = detail::rng_from_state(j.at("rng").get<std::string>());
    return agent;
}

SctsAgent::SctsAgent(std::size_t dim, TsConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
    cfg_.validate();
    if (dim == 0) throw ConfigError("scts: dimension must be >= 1");
    if (!cfg_.affinity) cfg_.affinity = Mat::Identity(static_cast<Eigen::Index>(cfg_.users), static_cast<Eigen::Index>(cfg_.users));
    for (std::size_t j = 0; j < cfg_.users; ++j) {
        B_.push_back(initial_user_design(dim, cfg_.lambda, (*cfg_.affinity)(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j))));
        y_.push_back(Vec::Zero(static_cast<Eigen::Index>(dim)));
    }
}

std::size_t SctsAgent::choose(const RoundContext& ctx) {
    check_context(ctx, B_[0].rows());
    user_ = ctx.user.value_or(0);
    if (user_ >= B_.size()) throw DomainError("scts: unknown user index");
    std::vector<Vec> mu_bar;
    for (std::size_t k = 0; k < B_.size(); ++k) mu_bar.push_back(solve_spd(B_[k], y_[k]));
    const auto est = local_estimate(user_, B_, mu_bar, cfg_.lambda, *cfg_.affinity);
    const Vec draw = sample_mvn(est.mu_hat, est.gamma, cfg_.v, rng_);
    chosen_ = argmax_score(ctx.contexts, draw);
    pi_ = selection_probabilities(ctx.contexts, est.mu_hat, est.gamma, cfg_.v, cfg_.pi_samples, rng_);
    ctx_ = ctx.contexts;
    pending_ = true;
    return chosen_;
}

void SctsAgent::observe(double reward) {
    if (!pending_) throw DomainError("scts: observe without a pending choice");
    pending_ = false;
    // Users other than j_t keep their state unchanged.
    centred_update(B_[user_], y_[user_], ctx_, pi_, chosen_, reward);
}

nlohmann::json SctsAgent::snapshot() const {
    if (pending_) throw DomainError("scts: snapshot while a choice is pending");
    auto j = detail::header("scts");
    j["config"] = to_json(cfg_);
    j["rng"] = detail::rng_state(rng_);
    j["B"] = nlohmann::json::array();
    j["y"] = nlohmann::json::array();
    for (std::size_t k = 0; k < B_.size(); ++k) {
        j["B"].push_back(to_json(B_[k]));
        j["y"].push_back(detail::vec_json(y_[k]));
    }
    return j;
}

std::unique_ptr<SctsAgent> SctsAgent::restore(const nlohmann::json& j) {
    detail::check_header(j, "scts");
    const auto cfg = config_from_json(j.at("config"));
    const Mat B0 = mat_from_json(j.at("B").at(0));
    auto agent = std::make_unique<SctsAgent>(static_cast<std::size_t>(B0.rows()), cfg, 0);
    for (std::size_t k = 0; k < agent->B_.size(); ++k) {
        agent->B_[k] = mat_from_json(j.at("B").at(k));
        agent->y_[k] = detail::vec_from_json(j.at("y").at(k));
    }
    agent->rng_ = detail::rng_from_state(j.at("rng").get<std::string>());
    return agent;
}

}  // namespace sbrl::ts
