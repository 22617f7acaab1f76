#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "sbrl/rng.hpp"

namespace sbrl::stable {

/// Parameters of an asymmetric alpha-stable law in the S0 (Zolotarev M)
/// form: tail index alpha in (1, 2], skewness beta in [-1, 1], scale
/// sigma > 0 and location delta. The mean is delta - beta*sigma*tan(pi*alpha/2).
class StableParams {
public:
    StableParams(double alpha, double beta, double sigma, double delta);

    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    double sigma() const { return sigma_; }
    double delta() const { return delta_; }

    double mean() const;

    /// Same shape and scale, location moved so that mean() == new_mean.
    StableParams with_mean(double new_mean) const;

    bool operator==(const StableParams&) const = default;

private:
    double alpha_;
    double beta_;
    double sigma_;
    double delta_;
};

/// tan(pi*alpha/2), exactly 0 at alpha == 2.
double skew_tangent(double alpha);

/// Asymptotic tail constant Gamma(alpha) sin(pi alpha / 2) / pi, so that
/// P(X > x) ~ c (1 + beta) sigma^alpha x^-alpha.
double tail_constant(double alpha);

std::complex<double> char_fn(const StableParams& params, double u);

/// Chambers-Mallows-Stuck draws.
double sample_one(const StableParams& params, Rng& rng);
std::vector<double> sample(const StableParams& params, std::size_t n, Rng& rng);

/// Density and distribution function by Fourier inversion with adaptive
/// Gauss-Legendre panels. Throws NumericError if the quadrature does not
/// converge.
double pdf(const StableParams& params, double x);
double cdf(const StableParams& params, double x);

/// Tabulated density of the standardized law S0(alpha, beta, 1, 0) for hot
/// loops (likelihoods, tail weights). Cubic Hermite interpolation on
/// [-kRange, kRange] with exact derivatives, power-law tails outside.
class StandardDensity {
public:
    static constexpr double kRange = 30.0;
    static constexpr double kStep = 0.05;

    StandardDensity(double alpha, double beta);

    /// Shared, cached instance keyed on (alpha, beta). Thread-safe.
    static std::shared_ptr<const StandardDensity> shared(double alpha, double beta);

    double alpha() const { return alpha_; }
    double beta() const { return beta_; }

    double pdf(double z) const;
    double log_pdf(double z) const;
    double cdf(double z) const;

    /// Convenience for a general (sigma, delta) member of the family.
    double pdf(double x, double sigma, double delta) const { return pdf((x - delta) / sigma) / sigma; }
    double log_pdf(double x, double sigma, double delta) const;
    double cdf(double x, double sigma, double delta) const { return cdf((x - delta) / sigma); }

private:
    double alpha_;
    double beta_;
    std::vector<double> f_;
    std::vector<double> df_;
    std::vector<double> cdf_;
};

struct StableFit {
    StableParams params;
    bool degenerate = false;
};

/// Point estimates from a regression on the empirical characteristic
/// function. Requires at least kMinEcfSamples observations.
inline constexpr std::size_t kMinEcfSamples = 50;
StableFit estimate_ecf(std::span<const double> samples);

struct TailCheck {
    double exponent = 0.0;
    double std_error = 0.0;
    std::size_t tail_count = 0;
    bool within_tolerance = false;
    bool wide_confidence = false;
};

/// Hill estimate of the tail exponent on the top 5% of |samples|.
TailCheck tail_order_check(std::span<const double> samples, double alpha);

}  // namespace sbrl::stable
