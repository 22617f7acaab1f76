#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "sbrl/error.hpp"
#include "sbrl/stable.hpp"

using namespace sbrl;
using namespace sbrl::stable;

namespace {

// Empirical characteristic function, the Monte-Carlo oracle for char_fn.
std::complex<double> empirical_cf(const std::vector<double>& xs, double u) {
    double re = 0.0, im = 0.0;
    for (double x : xs) {
        re += std::cos(u * x);
        im += std::sin(u * x);
    }
    return {re / static_cast<double>(xs.size()), im / static_cast<double>(xs.size())};
}

double sample_median(std::vector<double> xs) {
    std::nth_element(xs.begin(), xs.begin() + static_cast<std::ptrdiff_t>(xs.size() / 2), xs.end());
    return xs[xs.size() / 2];
}

}  // namespace

TEST_CASE("StableParams validates its domain") {
    CHECK_THROWS_AS(StableParams(1.0, 0.0, 1.0, 0.0), DomainError);
    CHECK_THROWS_AS(StableParams(2.1, 0.0, 1.0, 0.0), DomainError);
    CHECK_THROWS_AS(StableParams(1.5, 1.5, 1.0, 0.0), DomainError);
    CHECK_THROWS_AS(StableParams(1.5, 0.0, 0.0, 0.0), DomainError);
    CHECK_THROWS_AS(StableParams(1.5, 0.0, 1.0, NAN), DomainError);
    CHECK_NOTHROW(StableParams(2.0, -1.0, 0.5, 3.0));
}

TEST_CASE("mean follows the location relation") {
    CHECK(StableParams(2.0, 0.7, 1.3, 4.0).mean() == 4.0);
    CHECK(StableParams(1.3, 0.0, 2.0, -1.5).mean() == -1.5);
    const StableParams p(1.5, 0.5, 1.0, 0.0);
    CHECK(p.mean() == doctest::Approx(0.5));  // tan(0.75 pi) = -1
    CHECK(p.with_mean(2.0).mean() == doctest::Approx(2.0));
    CHECK(std::isfinite(StableParams(1.01, 1.0, 1.0, 0.0).mean()));
}

TEST_CASE("char_fn closed-form cases") {
    const auto g = char_fn(StableParams(2.0, 0.0, 1.0, 0.0), 1.0);
    CHECK(g.real() == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(g.imag() == doctest::Approx(0.0));
    for (double a : {1.1, 1.5, 2.0}) {
        const auto one = char_fn(StableParams(a, 0.3, 2.0, -1.0), 0.0);
        CHECK(one == std::complex<double>(1.0, 0.0));
    }
    CHECK_THROWS_AS(char_fn(StableParams(1.5, 0.0, 1.0, 0.0), INFINITY), DomainError);
}

TEST_CASE("char_fn is bounded and Hermitian") {
    Rng rng(7);
    for (int i = 0; i < 200; ++i) {
        const StableParams p(1.0 + 1e-3 + 0.999 * uniform01(rng), 2.0 * uniform01(rng) - 1.0,
                             0.1 + 3.0 * uniform01(rng), 10.0 * uniform01(rng) - 5.0);
        const double u = 20.0 * uniform01(rng) - 10.0;
        const auto a = char_fn(p, u);
        const auto b = char_fn(p, -u);
        CHECK(std::abs(a) <= 1.0 + 1e-15);
        CHECK(std::abs(a - std::conj(b)) < 1e-12);
    }
}

TEST_CASE("char_fn matches the empirical CF of CMS draws") {
    const StableParams p(1.5, 0.5, 1.0, 0.0);
    Rng rng(11);
    const auto xs = sample(p, 1'000'000, rng);
    CHECK(std::abs(empirical_cf(xs, 1.0) - char_fn(p, 1.0)) < 0.01);
}

TEST_CASE("sampler moments and symmetry") {
    SUBCASE("Gaussian endpoint has variance 2 sigma^2") {
        Rng rng(3);
        const auto xs = sample(StableParams(2.0, 0.0, 1.0, 0.0), 100'000, rng);
        double m = 0.0, v = 0.0;
        for (double x : xs) m += x;
        m /= xs.size();
        for (double x : xs) v += (x - m) * (x - m);
        v /= (xs.size() - 1);
        CHECK(std::abs(v - 2.0) < 0.1);
    }
    SUBCASE("symmetric law has median at the location") {
        Rng rng(5);
        const auto xs = sample(StableParams(1.5, 0.0, 1.0, 3.0), 100'000, rng);
        CHECK(std::abs(sample_median(xs) - 3.0) < 0.05);
    }
    SUBCASE("skewed law matches char_fn on three frequencies") {
        const StableParams p(1.3, 0.8, 2.0, 0.0);
        Rng rng(9);
        const auto xs = sample(p, 100'000, rng);
        for (double u : {0.1, 0.5, 1.0}) CHECK(std::abs(empirical_cf(xs, u) - char_fn(p, u)) < 0.02);
    }
    SUBCASE("same seed is bit-identical") {
        const StableParams p(1.4, -0.6, 0.7, 1.0);
        Rng a(42), b(42);
        CHECK(sample(p, 1000, a) == sample(p, 1000, b));
    }
}

TEST_CASE("pdf closed form and symmetry") {
    CHECK(pdf(StableParams(2.0, 0.0, 1.0, 0.0), 0.0) ==
          doctest::Approx(1.0 / std::sqrt(4.0 * std::numbers::pi)).epsilon(1e-6));
    const StableParams sym(1.5, 0.0, 1.0, 0.0);
    for (double x : {0.5, 1.0, 3.0}) CHECK(std::abs(pdf(sym, x) - pdf(sym, -x)) < 1e-6);
    const StableParams shifted(1.7, 0.0, 0.8, 2.0);
    for (double off : {0.1, 0.7, 1.5, 4.0, 12.0})
        CHECK(std::abs(pdf(shifted, 2.0 + off) - pdf(shifted, 2.0 - off)) < 1e-6);
}

TEST_CASE("pdf agrees with a histogram of CMS draws") {
    const StableParams p(1.5, 0.5, 1.0, 0.0);
    Rng rng(21);
    const auto xs = sample(p, 1'000'000, rng);
    const double x = 1.0, h = 0.05;
    const auto hits = std::count_if(xs.begin(), xs.end(), [&](double v) { return std::abs(v - x) < h; });
    const double density = static_cast<double>(hits) / (2.0 * h * xs.size());
    CHECK(std::abs(pdf(p, x) - density) < 0.005);
}

TEST_CASE("pdf integrates to one over +-50 sigma") {
    // The window holds all but ~1e-3 of the mass only for alpha >~ 1.55.
    for (double a : {1.6, 1.8, 2.0}) {
        const StableParams p(a, 0.4, 1.0, 0.0);
        double total = 0.0;
        for (int panel = -50; panel < 50; ++panel) {
            // 8-point midpoint rule per unit panel is plenty for a smooth density.
            for (int k = 0; k < 8; ++k) total += pdf(p, panel + (k + 0.5) / 8.0) / 8.0;
        }
        CHECK(std::abs(total - 1.0) < 1e-3);
    }
}

TEST_CASE("cdf is consistent with pdf") {
    const StableParams p(1.6, -0.4, 1.2, 0.5);
    CHECK(cdf(p, -1e6) < 1e-6);
    CHECK(cdf(p, 1e6) > 1.0 - 1e-6);
    // Central difference of cdf reproduces pdf.
    for (double x : {-2.0, 0.0, 0.5, 3.0}) {
        const double h = 1e-3;
        CHECK(std::abs((cdf(p, x + h) - cdf(p, x - h)) / (2 * h) - pdf(p, x)) < 1e-5);
    }
}

TEST_CASE("tabulated density tracks direct quadrature") {
    for (auto [a, b] : {std::pair{1.2, 0.8}, {1.5, 0.0}, {1.8, -0.5}, {2.0, 0.0}, {1.05, 0.3}}) {
        const StandardDensity table(a, b);
        const StableParams p(a, b, 1.0, 0.0);
        for (double z : {-25.0, -7.3, -1.0, -0.01, 0.0, 0.42, 2.5, 11.0, 29.0}) {
            CHECK(std::abs(table.pdf(z) - pdf(p, z)) < 1e-6);
            CHECK(std::abs(table.cdf(z) - cdf(p, z)) < 1e-6);
        }
        CHECK(table.cdf(-1e4) < 1e-3);
        CHECK(table.cdf(1e4) > 1.0 - 1e-3);
    }
    auto a = StandardDensity::shared(1.5, 0.2);
    auto b = StandardDensity::shared(1.5, 0.2);
    CHECK(a.get() == b.get());
}

TEST_CASE("ECF estimation recovers parameters") {
    const StableParams truth(1.5, 0.5, 1.0, 0.0);
    double ea = 0, eb = 0, es = 0, ed = 0;
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(1000 + s);
        const auto xs = sample(truth, 10'000, rng);
        const auto fit = estimate_ecf(xs);
        CHECK_FALSE(fit.degenerate);
        ea += std::abs(fit.params.alpha() - 1.5);
        eb += std::abs(fit.params.beta() - 0.5);
        es += std::abs(fit.params.sigma() - 1.0);
        ed += std::abs(fit.params.delta() - 0.0);
    }
    CHECK(ea / seeds <= 0.1);
    CHECK(eb / seeds <= 0.1);
    CHECK(es / seeds <= 0.1);
    CHECK(ed / seeds <= 0.1);
}

TEST_CASE("ECF estimation at the Gaussian limit") {
    Rng rng(77);
    const auto xs = sample(StableParams(2.0, 0.0, 1.0, 5.0), 10'000, rng);
    const auto fit = estimate_ecf(xs);
    CHECK(fit.params.alpha() >= 1.9);
    CHECK(std::abs(fit.params.delta() - 5.0) < 0.1);
}

TEST_CASE("ECF estimation edge cases") {
    const std::vector<double> constant(100, 3.0);
    const auto fit = estimate_ecf(constant);
    CHECK(fit.degenerate);
    CHECK(fit.params.delta() == 3.0);
    CHECK(fit.params.alpha() == 2.0);
    const std::vector<double> few(49, 1.0);
    CHECK_THROWS_AS(estimate_ecf(few), InsufficientDataError);
}

TEST_CASE("tail order diagnostic") {
    Rng rng(5);
    const auto heavy = sample(StableParams(1.3, 0.0, 1.0, 0.0), 100'000, rng);
    const auto t1 = tail_order_check(heavy, 1.3);
    CHECK(t1.exponent >= 1.0);
    CHECK(t1.exponent <= 1.6);
    CHECK_FALSE(t1.wide_confidence);

    const auto gauss = sample(StableParams(2.0, 0.0, 1.0, 0.0), 100'000, rng);
    CHECK(tail_order_check(gauss, 2.0).exponent >= 1.7);

    const auto small = sample(StableParams(1.5, 0.0, 1.0, 0.0), 100, rng);
    CHECK(tail_order_check(small, 1.5).wide_confidence);
}
