#include <cmath>
#include <sstream>

#include "sbrl/error.hpp"
#include "sbrl/market.hpp"

namespace sbrl::market {

void CppiConfig::validate(double initial_asset) const {
    if (!(floor >= 0.0) || !(floor < initial_asset)) {
        std::ostringstream msg;
        msg << "cppi floor must satisfy 0 <= F < A0 (F = " << floor << ", A0 = " << initial_asset << ")";
        throw ConfigError(msg.str());
    }
    if (!(multiplier >= 0.0) || !std::isfinite(multiplier)) throw ConfigError("cppi multiplier must be >= 0");
}

Exposure cppi_exposure(double asset, const CppiConfig& cfg) {
    if (!std::isfinite(asset)) throw DomainError("cppi_exposure: asset is not finite");
    Exposure e;
    e.value = cfg.multiplier * std::max(asset - cfg.floor, 0.0);
    if (!cfg.allow_leverage && e.value > asset) {
        e.value = std::max(asset, 0.0);
        e.capped = true;
    }
    return e;
}

void MarketConfig::validate() const {
    if (!(cost_bps >= 0.0) || !std::isfinite(cost_bps)) throw ConfigError("cost_bps must be >= 0");
}

StepResult step(const PortfolioState& state, const Vec& action, const Vec& next_prices, const MarketConfig& cfg) {
    const Eigen::Index D = state.p.size();
    if (action.size() != D || next_prices.size() != D) throw DomainError("step: action and price sizes must equal D");
    if (!action.allFinite()) throw DomainError("step: action is not finite");
    const double c = cfg.cost_rate();
    Vec want = cfg.fractional ? action : Vec(action.unaryExpr([](double x) { return std::trunc(x); }));

    StepResult out;
    out.state = state;
    out.executed = Vec::Zero(D);
    auto& s = out.state;

    for (Eigen::Index d = 0; d < D; ++d) {
        if (want(d) >= 0.0) continue;
        const double q = std::min(-want(d), s.h(d));
        const double notional = q * s.p(d);
        s.h(d) -= q;
        s.b += notional - c * notional;
        out.cost += c * notional;
        out.executed(d) = -q;
    }

    double buy_notional = 0.0;
    for (Eigen::Index d = 0; d < D; ++d)
        if (want(d) > 0.0) buy_notional += want(d) * s.p(d);
    if (buy_notional > 0.0) {
        const double scale = std::min(1.0, s.b / (buy_notional * (1.0 + c)));
        for (Eigen::Index d = 0; d < D; ++d) {
            if (want(d) <= 0.0) continue;
            double q = want(d) * scale;
            if (!cfg.fractional) q = std::floor(q);
            const double notional = q * s.p(d);
            s.h(d) += q;
            s.b -= notional + c * notional;
            out.cost += c * notional;
            out.executed(d) = q;
        }
        // Scaling can leave -1e-14 of cash through rounding.
        if (s.b < 0.0) s.b = 0.0;
    }

    const double before = state.asset();
    s.p = next_prices;
    ++s.t;
    out.reward = s.asset() - before;
    return out;
}

Vec portfolio_weights(const PortfolioState& state) {
    const double a = state.asset();
    if (!(a > 0.0)) return Vec::Zero(state.p.size());
    return state.h.cwiseProduct(state.p) / a;
}

Vec cppi_expert_action(const PortfolioState& state, const CppiConfig& cfg, const MarketConfig& market) {
    const Eigen::Index D = state.p.size();
    const double per_stock = cppi_exposure(state.asset(), cfg).value / static_cast<double>(D);
    Vec target = Vec::Constant(D, per_stock).cwiseQuotient(state.p);
    if (!market.fractional) target = target.array().floor();
    return target - state.h;
}

Vec weights_to_trades(const PortfolioState& state, const Vec& delta_weights, const MarketConfig& market) {
    if (delta_weights.size() != state.p.size()) throw DomainError("weights_to_trades: size mismatch");
    Vec q = (delta_weights * state.asset()).cwiseQuotient(state.p);
    if (!market.fractional) q = q.unaryExpr([](double x) { return std::trunc(x); });
    return q;
}

TradingEnv::TradingEnv(OhlcvSeries series, MarketConfig cfg, double initial_cash)
    : series_(std::move(series)), cfg_(cfg), initial_cash_(initial_cash) {
    cfg_.validate();
    if (series_.days() < 2) throw DataError("trading needs at least two days of prices");
    if (!(initial_cash > 0.0)) throw ConfigError("initial cash must be > 0");
    reset();
}

const PortfolioState& TradingEnv::reset() {
    state_.p = series_.close.row(0).transpose();
    state_.h = Vec::Zero(static_cast<Eigen::Index>(series_.stocks()));
    state_.b = initial_cash_;
    state_.t = 0;
    equity_.assign(1, initial_cash_);
    fills_.clear();
    costs_.clear();
    return state_;
}

StepResult TradingEnv::step(const Vec& action) {
    if (done()) throw DomainError("trading episode is finished");
    const Vec next = series_.close.row(static_cast<Eigen::Index>(state_.t + 1)).transpose();
    auto res = market::step(state_, action, next, cfg_);
    state_ = res.state;
    equity_.push_back(state_.asset());
    fills_.push_back(res.executed);
    costs_.push_back(res.cost);
    return res;
}

std::vector<double> TradingEnv::replay_equity() const {
    const double c = cfg_.cost_rate();
    std::vector<double> out{initial_cash_};
    double cash = initial_cash_;
    Vec h = Vec::Zero(static_cast<Eigen::Index>(series_.stocks()));
    for (std::size_t k = 0; k < fills_.size(); ++k) {
        const Vec p = series_.close.row(static_cast<Eigen::Index>(k)).transpose();
        for (Eigen::Index d = 0; d < p.size(); ++d) {
            const double notional = fills_[k](d) * p(d);
            cash -= notional + c * std::abs(notional);
            h(d) += fills_[k](d);
        }
        out.push_back(cash + h.dot(series_.close.row(static_cast<Eigen::Index>(k + 1)).transpose()));
    }
    return out;
}

}  // namespace sbrl::market
