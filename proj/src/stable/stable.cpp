#include "sbrl/stable.hpp"

#include <algorithm>
#include <array>
#include <functional>
#include <limits>
#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>

#include "sbrl/error.hpp"
#include "quadrature.hpp"

namespace sbrl::stable {

namespace {

constexpr double kPi = std::numbers::pi;

// exp(-u^alpha) < 1e-12 beyond this frequency.
double truncation_frequency(double alpha) { return std::pow(27.7, 1.0 / alpha); }

// Phase of the standardized S0 characteristic function at u > 0.
double s0_phase(double u, double alpha, double beta_tan) {
    return beta_tan * (std::pow(u, alpha) - u);
}

// Upper bound on |d/du (phase - u z)| over [0, U].
double oscillation_bound(double alpha, double beta_tan, double upper, double z) {
    return std::abs(z) + std::abs(beta_tan) * (alpha * std::pow(upper, alpha - 1.0) + 1.0);
}

// Beyond this the quadrature cost grows linearly in |z| and the leading
// power-law term is within ~1e-7 absolute.
constexpr double kAsymptoticZ = 2000.0;

double standard_pdf_direct(double alpha, double beta, double z) {
    if (std::abs(z) > kAsymptoticZ) {
        const double side = z > 0.0 ? 1.0 + beta : 1.0 - beta;
        return alpha * tail_constant(alpha) * side * std::pow(std::abs(z), -alpha - 1.0);
    }
    const double bt = beta * skew_tangent(alpha);
    const double upper = truncation_frequency(alpha);
    const double omega = oscillation_bound(alpha, bt, upper, z);
    const auto panels = static_cast<std::size_t>(std::ceil(upper * (omega + 1.0) / 2.0)) + 4;
    auto integrand = [&](double u) {
        return std::exp(-std::pow(u, alpha)) * std::cos(s0_phase(u, alpha, bt) - u * z);
    };
    return detail::integrate(integrand, 0.0, upper, panels, 1e-10, "stable pdf") / kPi;
}

double standard_cdf_direct(double alpha, double beta, double z) {
    if (std::abs(z) > kAsymptoticZ) {
        const double side = z > 0.0 ? 1.0 + beta : 1.0 - beta;
        const double tail = tail_constant(alpha) * side * std::pow(std::abs(z), -alpha);
        return z > 0.0 ? 1.0 - tail : tail;
    }
    const double bt = beta * skew_tangent(alpha);
    const double upper = truncation_frequency(alpha);
    const double omega = oscillation_bound(alpha, bt, upper, z);
    const auto panels = static_cast<std::size_t>(std::ceil(upper * (omega + 1.0) / 2.0)) + 4;
    auto integrand = [&](double u) {
        return std::exp(-std::pow(u, alpha)) * std::sin(s0_phase(u, alpha, bt) - u * z) / u;
    };
    double value = 0.5 - detail::integrate(integrand, 0.0, upper, panels, 1e-10, "stable cdf") / kPi;
    return std::clamp(value, 0.0, 1.0);
}

void check_finite(double v, const char* what) {
    if (!std::isfinite(v)) {
        std::ostringstream msg;
        msg << what << " must be finite, got " << v;
        throw DomainError(msg.str());
    }
}

}  // namespace

StableParams::StableParams(double alpha, double beta, double sigma, double delta)
    : alpha_(alpha), beta_(beta), sigma_(sigma), delta_(delta) {
    if (!(alpha > 1.0 && alpha <= 2.0)) {
        std::ostringstream msg;
        msg << "alpha must lie in (1, 2], got " << alpha;
        throw DomainError(msg.str());
    }
    if (!(beta >= -1.0 && beta <= 1.0)) {
        std::ostringstream msg;
        msg << "beta must lie in [-1, 1], got " << beta;
        throw DomainError(msg.str());
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        std::ostringstream msg;
        msg << "sigma must be positive and finite, got " << sigma;
        throw DomainError(msg.str());
    }
    check_finite(delta, "delta");
}

double skew_tangent(double alpha) {
    if (alpha == 2.0) return 0.0;
    return std::tan(kPi * alpha / 2.0);
}

double tail_constant(double alpha) { return std::tgamma(alpha) * std::sin(kPi * alpha / 2.0) / kPi; }

double StableParams::mean() const { return delta_ - beta_ * sigma_ * skew_tangent(alpha_); }

StableParams StableParams::with_mean(double new_mean) const {
    return {alpha_, beta_, sigma_, new_mean + beta_ * sigma_ * skew_tangent(alpha_)};
}

std::complex<double> char_fn(const StableParams& p, double u) {
    check_finite(u, "frequency u");
    if (u == 0.0) return {1.0, 0.0};
    const double a = p.alpha();
    const double au = std::abs(u);
    const double scale_pow = std::pow(p.sigma() * au, a);  // sigma^a |u|^a
    const double sgn = u > 0.0 ? 1.0 : -1.0;
    const double skew = p.beta() * skew_tangent(a) * sgn * (std::pow(p.sigma() * au, 1.0 - a) - 1.0);
    const std::complex<double> exponent(-scale_pow, -scale_pow * skew + u * p.delta());
    return std::exp(exponent);
}

double sample_one(const StableParams& p, Rng& rng) {
    double v;
    do {
        v = kPi * (uniform01(rng) - 0.5);
    } while (v <= -kPi / 2.0);
    double w;
    do {
        w = std::exponential_distribution<double>(1.0)(rng);
    } while (w <= 0.0);

    const double a = p.alpha();
    double x;
    if (a == 2.0) {
        x = 2.0 * std::sin(v) * std::sqrt(w);
    } else {
        const double t = skew_tangent(a);
        const double b = std::atan(p.beta() * t) / a;
        const double s = std::pow(1.0 + p.beta() * p.beta() * t * t, 1.0 / (2.0 * a));
        x = s * std::sin(a * (v + b)) / std::pow(std::cos(v), 1.0 / a) *
            std::pow(std::cos(v - a * (v + b)) / w, (1.0 - a) / a);
    }
    // Standard S1 draw; scaled and shifted so the location is the mean.
    return p.sigma() * x + p.mean();
}

std::vector<double> sample(const StableParams& p, std::size_t n, Rng& rng) {
    std::vector<double> out(n);
    for (auto& x : out) x = sample_one(p, rng);
    return out;
}

double pdf(const StableParams& p, double x) {
    check_finite(x, "x");
    const double z = (x - p.delta()) / p.sigma();
    return std::max(0.0, standard_pdf_direct(p.alpha(), p.beta(), z)) / p.sigma();
}

double cdf(const StableParams& p, double x) {
    check_finite(x, "x");
    return standard_cdf_direct(p.alpha(), p.beta(), (x - p.delta()) / p.sigma());
}

// ---------------------------------------------------------------------------
// StandardDensity

StandardDensity::StandardDensity(double alpha, double beta) : alpha_(alpha), beta_(beta) {
    StableParams(alpha, beta, 1.0, 0.0);  // validates

    const double bt = beta * skew_tangent(alpha);
    const double upper = truncation_frequency(alpha);
    const double omega = oscillation_bound(alpha, bt, upper, kRange);
    const double panel = std::min(0.5, 3.0 / omega);

    // Quadrature nodes: geometric refinement near u = 0 where u^alpha is not
    // smooth, uniform panels afterwards.
    std::vector<double> edges{0.0};
    for (int k = 5; k >= 1; --k) edges.push_back(panel * std::pow(4.0, -k));
    for (double e = panel; e < upper; e += panel) edges.push_back(e);
    edges.push_back(upper);

    const auto& rule = detail::gl16();
    std::vector<std::complex<double>> term;   // weight * phi0(u) * e^{-i u z}
    std::vector<std::complex<double>> rotor;  // e^{-i u h}
    std::vector<double> nodes;
    for (std::size_t e = 0; e + 1 < edges.size(); ++e) {
        const double lo = edges[e];
        const double hi = edges[e + 1];
        const double half = 0.5 * (hi - lo);
        const double mid = 0.5 * (hi + lo);
        for (std::size_t i = 0; i < 16; ++i) {
            const double u = mid + half * rule.x[i];
            const double amp = rule.w[i] * half * std::exp(-std::pow(u, alpha)) / kPi;
            const double phase = s0_phase(u, alpha, bt) + u * kRange;  // start at z = -kRange
            term.push_back(std::polar(amp, phase));
            rotor.push_back(std::polar(1.0, -u * kStep));
            nodes.push_back(u);
        }
    }

    const auto points = static_cast<std::size_t>(std::llround(2.0 * kRange / kStep)) + 1;
    f_.resize(points);
    df_.resize(points);
    for (std::size_t m = 0; m < points; ++m) {
        double f = 0.0;
        double df = 0.0;
        for (std::size_t k = 0; k < term.size(); ++k) {
            f += term[k].real();
            // d/dz Re[c e^{-iuz}] = u Im[c e^{-iuz}]
            df += nodes[k] * term[k].imag();
            term[k] *= rotor[k];
        }
        f_[m] = f;
        df_[m] = df;
    }

    cdf_.resize(points);
    cdf_[0] = standard_cdf_direct(alpha, beta, -kRange);
    for (std::size_t m = 0; m + 1 < points; ++m) {
        const double cell = kStep * (0.5 * (f_[m] + f_[m + 1]) + kStep * (df_[m] - df_[m + 1]) / 12.0);
        cdf_[m + 1] = cdf_[m] + cell;
    }
}

std::shared_ptr<const StandardDensity> StandardDensity::shared(double alpha, double beta) {
    static std::mutex mutex;
    static std::map<std::pair<std::uint64_t, std::uint64_t>, std::shared_ptr<const StandardDensity>> cache;
    const auto key = std::make_pair(std::bit_cast<std::uint64_t>(alpha), std::bit_cast<std::uint64_t>(beta));
    {
        std::lock_guard lock(mutex);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    auto table = std::make_shared<const StandardDensity>(alpha, beta);
    std::lock_guard lock(mutex);
    if (cache.size() >= 512) cache.clear();
    return cache.emplace(key, std::move(table)).first->second;
}

double StandardDensity::pdf(double z) const {
    if (std::isnan(z)) return 0.0;
    if (z <= -kRange) return f_.front() * std::pow(kRange / -z, alpha_ + 1.0);
    if (z >= kRange) return f_.back() * std::pow(kRange / z, alpha_ + 1.0);
    const double pos = (z + kRange) / kStep;
    auto i = static_cast<std::size_t>(pos);
    if (i >= f_.size() - 1) i = f_.size() - 2;
    const double s = pos - static_cast<double>(i);
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double value = (2 * s3 - 3 * s2 + 1) * f_[i] + (s3 - 2 * s2 + s) * kStep * df_[i] +
                         (-2 * s3 + 3 * s2) * f_[i + 1] + (s3 - s2) * kStep * df_[i + 1];
    return std::max(value, 0.0);
}

double StandardDensity::log_pdf(double z) const { return std::log(std::max(pdf(z), 1e-300)); }

double StandardDensity::log_pdf(double x, double sigma, double delta) const {
    return log_pdf((x - delta) / sigma) - std::log(sigma);
}

double StandardDensity::cdf(double z) const {
    if (std::isnan(z)) return 0.5;
    if (z <= -kRange) return cdf_.front() * std::pow(kRange / -z, alpha_);
    if (z >= kRange) {
        const double right = std::max(0.0, 1.0 - cdf_.back());
        return 1.0 - right * std::pow(kRange / z, alpha_);
    }
    const double pos = (z + kRange) / kStep;
    auto i = static_cast<std::size_t>(pos);
    if (i >= f_.size() - 1) i = f_.size() - 2;
    const double s = pos - static_cast<double>(i);
    const double s2 = s * s;
    const double s3 = s2 * s;
    const double s4 = s3 * s;
    const double integral = (0.5 * s4 - s3 + s) * f_[i] + (0.25 * s4 - 2.0 * s3 / 3.0 + 0.5 * s2) * kStep * df_[i] +
                            (-0.5 * s4 + s3) * f_[i + 1] + (0.25 * s4 - s3 / 3.0) * kStep * df_[i + 1];
    return std::clamp(cdf_[i] + kStep * integral, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Estimation

namespace {

double quantile(std::vector<double>& v, double q) {
    // Linear interpolation between order statistics.
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double a = v[lo];
    double b = a;
    if (hi != lo) b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
    return a + (pos - static_cast<double>(lo)) * (b - a);
}

constexpr double kMinEcfAlpha = 1.01;
constexpr std::size_t kEcfGrid = 10;

}  // namespace

StableFit estimate_ecf(std::span<const double> samples) {
    if (samples.size() < kMinEcfSamples) {
        std::ostringstream msg;
        msg << "ECF estimation needs at least " << kMinEcfSamples << " samples, got " << samples.size();
        throw InsufficientDataError(msg.str());
    }
    for (double x : samples) check_finite(x, "sample");

    std::vector<double> work(samples.begin(), samples.end());
    const double median = quantile(work, 0.5);
    const double iqr = quantile(work, 0.75) - quantile(work, 0.25);
    double scale0 = iqr / 2.0;
    if (!(scale0 > 0.0)) {
        double mad = 0.0;
        for (double x : samples) mad += std::abs(x - median);
        scale0 = mad / static_cast<double>(samples.size());
    }
    const double sigma_floor = 1e-9 * std::max(1.0, std::abs(median));
    if (!(scale0 > sigma_floor)) {
        return {StableParams(2.0, 0.0, sigma_floor, median), true};
    }

    // Empirical CF of the standardized sample on u_k = k / 10, k = 1..10,
    // i.e. the grid (0, 1/scale0] in the original units.
    const double n = static_cast<double>(samples.size());
    std::array<double, kEcfGrid> u{};
    std::array<double, kEcfGrid> modulus{};
    std::array<double, kEcfGrid> phase{};
    for (std::size_t k = 0; k < kEcfGrid; ++k) {
        u[k] = static_cast<double>(k + 1) / static_cast<double>(kEcfGrid);
        double re = 0.0;
        double im = 0.0;
        for (double x : samples) {
            const double y = (x - median) / scale0;
            re += std::cos(u[k] * y);
            im += std::sin(u[k] * y);
        }
        re /= n;
        im /= n;
        modulus[k] = std::hypot(re, im);
        phase[k] = std::atan2(im, re);
    }

    // log(-log|phi|^2) = log(2 sigma^alpha) + alpha log u
    std::vector<double> lx;
    std::vector<double> ly;
    for (std::size_t k = 0; k < kEcfGrid; ++k) {
        if (modulus[k] > 1e-8 && modulus[k] < 1.0 - 1e-12) {
            lx.push_back(std::log(u[k]));
            ly.push_back(std::log(-2.0 * std::log(modulus[k])));
        }
    }
    double alpha = 2.0;
    double intercept;
    if (lx.size() >= 2) {
        const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / static_cast<double>(lx.size());
        const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / static_cast<double>(ly.size());
        double sxy = 0.0;
        double sxx = 0.0;
        for (std::size_t i = 0; i < lx.size(); ++i) {
            sxy += (lx[i] - mx) * (ly[i] - my);
            sxx += (lx[i] - mx) * (lx[i] - mx);
        }
        alpha = std::clamp(sxy / sxx, kMinEcfAlpha, 2.0);
        intercept = my - alpha * mx;
    } else if (lx.size() == 1) {
        intercept = ly[0] - alpha * lx[0];
    } else {
        intercept = std::log(2.0);
    }
    const double sigma_std = std::pow(std::exp(intercept) / 2.0, 1.0 / alpha);

    // arg phi(u) = mean * u + beta tan(pi alpha/2) sigma^alpha u^alpha
    double a11 = 0.0, a12 = 0.0, a22 = 0.0, b1 = 0.0, b2 = 0.0;
    for (std::size_t k = 0; k < kEcfGrid; ++k) {
        if (modulus[k] <= 1e-8) continue;
        const double c1 = u[k];
        const double c2 = std::pow(u[k], alpha);
        a11 += c1 * c1;
        a12 += c1 * c2;
        a22 += c2 * c2;
        b1 += c1 * phase[k];
        b2 += c2 * phase[k];
    }
    double mean_std;
    double kappa;
    const double det = a11 * a22 - a12 * a12;
    if (std::abs(det) > 1e-12 * a11 * a22) {
        mean_std = (a22 * b1 - a12 * b2) / det;
        kappa = (a11 * b2 - a12 * b1) / det;
    } else {
        mean_std = a11 > 0.0 ? b1 / a11 : 0.0;
        kappa = 0.0;
    }
    const double t = skew_tangent(alpha);
    const double denom = t * std::pow(sigma_std, alpha);
    double beta = 0.0;
    if (std::abs(denom) > 1e-12) beta = std::clamp(kappa / denom, -1.0, 1.0);
    const double delta_std = mean_std + beta * sigma_std * t;

    const double sigma = std::max(sigma_std * scale0, sigma_floor);
    return {StableParams(alpha, beta, sigma, delta_std * scale0 + median), false};
}

TailCheck tail_order_check(std::span<const double> samples, double alpha) {
    TailCheck out;
    out.wide_confidence = samples.size() < 1000;
    if (samples.size() < 3) {
        out.exponent = std::numeric_limits<double>::quiet_NaN();
        out.std_error = std::numeric_limits<double>::infinity();
        return out;
    }
    std::vector<double> mags(samples.size());
    std::transform(samples.begin(), samples.end(), mags.begin(), [](double x) { return std::abs(x); });
    const std::size_t k = std::max<std::size_t>(
        2, static_cast<std::size_t>(std::ceil(0.05 * static_cast<double>(samples.size()))));
    const std::size_t kk = std::min(k, mags.size() - 1);
    std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(kk), mags.end(), std::greater<>());
    const double threshold = mags[kk];
    out.tail_count = kk;
    if (!(threshold > 0.0)) {
        out.exponent = std::numeric_limits<double>::infinity();
        out.std_error = std::numeric_limits<double>::infinity();
        return out;
    }
    double h = 0.0;
    for (std::size_t i = 0; i < kk; ++i) h += std::log(mags[i] / threshold);
    h /= static_cast<double>(kk);
    out.exponent = h > 0.0 ? 1.0 / h : std::numeric_limits<double>::infinity();
    out.std_error = out.exponent / std::sqrt(static_cast<double>(kk));
    out.within_tolerance = std::abs(out.exponent - alpha) <= 0.3;
    return out;
}

}  // namespace sbrl::stable
