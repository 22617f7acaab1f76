#include <cmath>

#include "sbrl/error.hpp"
#include "sbrl/market.hpp"

namespace sbrl::market {

std::vector<double> daily_returns(const std::vector<double>& equity) {
    std::vector<double> r;
    for (std::size_t t = 1; t < equity.size(); ++t) r.push_back(equity[t] / equity[t - 1] - 1.0);
    return r;
}

Metrics metrics(const std::vector<double>& equity, double periods_per_year) {
    if (!(periods_per_year > 0.0)) throw DomainError("periods_per_year must be > 0");
    if (equity.size() < 2) throw DomainError("metrics need at least two equity points");
    for (double a : equity)
        if (!(a > 0.0) || !std::isfinite(a)) throw DomainError("equity values must be positive and finite");
    Metrics m;
    const double days = static_cast<double>(equity.size() - 1);
    m.annual_return = std::pow(equity.back() / equity.front(), periods_per_year / days) - 1.0;

    const auto r = daily_returns(equity);
    double mean = 0.0;
    for (double x : r) mean += x;
    mean /= static_cast<double>(r.size());
    if (r.size() >= 2) {
        double ss = 0.0;
        for (double x : r) ss += (x - mean) * (x - mean);
        const double sd = std::sqrt(ss / static_cast<double>(r.size() - 1));
        if (sd > 1e-14 * std::max(1.0, std::abs(mean))) m.sharpe = mean / sd * std::sqrt(periods_per_year);
    }

    double peak = equity.front();
    for (double a : equity) {
        peak = std::max(peak, a);
        m.max_drawdown = std::max(m.max_drawdown, (peak - a) / peak);
    }
    return m;
}

}  // namespace sbrl::market
