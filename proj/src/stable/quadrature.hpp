#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <sstream>
#include <vector>

#include "sbrl/error.hpp"

namespace sbrl::stable::detail {

template <std::size_t N>
struct GaussLegendre {
    std::array<double, N> x{};
    std::array<double, N> w{};

    GaussLegendre() {
        for (std::size_t i = 0; i < N; ++i) {
            double z = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) /
                                (static_cast<double>(N) + 0.5));
            double dp = 0.0;
            for (int it = 0; it < 100; ++it) {
                double p0 = 1.0;
                double p1 = z;
                for (std::size_t k = 2; k <= N; ++k) {
                    double pk = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / static_cast<double>(k);
                    p0 = p1;
                    p1 = pk;
                }
                dp = static_cast<double>(N) * (z * p1 - p0) / (z * z - 1.0);
                double dz = p1 / dp;
                z -= dz;
                if (std::abs(dz) < 1e-16) break;
            }
            x[i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        }
    }
};

inline const GaussLegendre<16>& gl16() {
    static const GaussLegendre<16> rule;
    return rule;
}

template <class F>
double gl16_panel(const F& f, double a, double b) {
    const auto& rule = gl16();
    double half = 0.5 * (b - a);
    double mid = 0.5 * (a + b);
    double sum = 0.0;
    for (std::size_t i = 0; i < 16; ++i) sum += rule.w[i] * f(mid + half * rule.x[i]);
    return sum * half;
}

struct QuadratureStats {
    std::size_t panels = 0;
    std::size_t failed_panels = 0;
    double worst_error = 0.0;
};

template <class F>
double adaptive_panel(const F& f, double a, double b, double whole, double tol, int depth,
                      QuadratureStats& stats) {
    double mid = 0.5 * (a + b);
    double left = gl16_panel(f, a, mid);
    double right = gl16_panel(f, mid, b);
    double err = std::abs(left + right - whole);
    if (err <= tol || depth >= 24) {
        ++stats.panels;
        if (err > tol) {
            ++stats.failed_panels;
            stats.worst_error = std::max(stats.worst_error, err);
        }
        return left + right;
    }
    return adaptive_panel(f, a, mid, left, 0.5 * tol, depth + 1, stats) +
           adaptive_panel(f, mid, b, right, 0.5 * tol, depth + 1, stats);
}

/// Integrates f over [a, b] starting from `initial_panels` equal panels, each
/// refined by bisection until two-level agreement is within its share of
/// `abs_tol`. Throws NumericError with diagnostics on non-convergence.
template <class F>
double integrate(const F& f, double a, double b, std::size_t initial_panels, double abs_tol,
                 const char* what) {
    QuadratureStats stats;
    double width = (b - a) / static_cast<double>(initial_panels);
    double share = abs_tol / static_cast<double>(initial_panels);
    double total = 0.0;
    for (std::size_t i = 0; i < initial_panels; ++i) {
        double lo = a + width * static_cast<double>(i);
        double hi = (i + 1 == initial_panels) ? b : lo + width;
        total += adaptive_panel(f, lo, hi, gl16_panel(f, lo, hi), share, 0, stats);
    }
    if (stats.failed_panels > 0 && stats.worst_error > 100.0 * abs_tol) {
        std::ostringstream msg;
        msg << what << ": quadrature did not converge on [" << a << ", " << b << "]; "
            << stats.failed_panels << " of " << stats.panels
            << " panels above tolerance, worst panel error " << stats.worst_error;
        throw NumericError(msg.str());
    }
    return total;
}

}  // namespace sbrl::stable::detail
