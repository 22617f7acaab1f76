#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "sbrl/error.hpp"
#include "sbrl/ts.hpp"

namespace sbrl::ts {

void TsConfig::validate() const {
    auto fail = [](const std::string& what) { throw ConfigError("agent config: " + what); };
    static const char* known[] = {"cts", "acts", "scts", "sacts", "mdp_acts", "plain_ats"};
    if (std::find(std::begin(known), std::end(known), algorithm) == std::end(known))
        fail("unknown algorithm '" + algorithm + "'");
    if (!(v >= 0.0) || !std::isfinite(v)) fail("v must be >= 0");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be >= 0");
    if (users == 0) fail("users must be >= 1");
    if (refresh_every == 0) fail("refresh_every must be >= 1");
    if (pi_samples == 0) fail("pi_samples must be >= 1");
    if (!(mh_step > 0.0)) fail("mh_step must be > 0");
    if (!(prior_scale > 0.0)) fail("prior_scale must be > 0");
    if (affinity) {
        if (static_cast<std::size_t>(affinity->rows()) != users || static_cast<std::size_t>(affinity->cols()) != users)
            fail("affinity must be users x users");
        if (!affinity->allFinite()) fail("affinity must be finite");
    }
}

Vec sample_mvn(const Vec& mean, const Mat& precision, double scale, Rng& rng) {
    Vec z(mean.size());
    for (auto& x : z) x = std_normal(rng);
    Eigen::LLT<Mat> llt(precision);
    if (llt.info() != Eigen::Success) throw NumericError("precision matrix is not positive definite");
    // precision = L L^T, so L^-T z has covariance precision^-1.
    return mean + scale * llt.matrixU().solve(z);
}

std::size_t argmax_score(const Mat& thetas, const Vec& w) {
    const Vec s = thetas * w;
    std::size_t best = 0;
    for (Eigen::Index i = 1; i < s.size(); ++i)
        if (s(i) > s(static_cast<Eigen::Index>(best))) best = static_cast<std::size_t>(i);
    return best;
}

Vec selection_probabilities(const Mat& contexts, const Vec& mean, const Mat& precision, double v,
                            std::size_t samples, Rng& rng) {
    Vec pi = Vec::Zero(contexts.rows());
    if (v == 0.0) {
        pi(static_cast<Eigen::Index>(argmax_score(contexts, mean))) = 1.0;
        return pi;
    }
    Eigen::LLT<Mat> llt(precision);
    if (llt.info() != Eigen::Success) throw NumericError("precision matrix is not positive definite");
    Vec z(mean.size());
    for (std::size_t k = 0; k < samples; ++k) {
        for (auto& x : z) x = std_normal(rng);
        const Vec draw = mean + v * llt.matrixU().solve(z);
        pi(static_cast<Eigen::Index>(argmax_score(contexts, draw))) += 1.0;
    }
    return pi / static_cast<double>(samples);
}

void centred_update(Mat& B, Vec& y, const Mat& thetas, const Vec& weights, std::size_t chosen, double reward) {
    const Vec xbar = thetas.transpose() * weights;
    const Vec x = thetas.row(static_cast<Eigen::Index>(chosen)).transpose() - xbar;
    Mat spread = x * x.transpose();
    for (Eigen::Index k = 0; k < thetas.rows(); ++k) {
        if (weights(k) == 0.0) continue;
        const Vec dk = thetas.row(k).transpose() - xbar;
        spread.noalias() += weights(k) * dk * dk.transpose();
    }
    B += 0.5 * (spread + spread.transpose());
    y += 2.0 * reward * x;
}

Vec solve_spd(const Mat& B, const Vec& y) {
    Eigen::LLT<Mat> llt(B);
    if (llt.info() != Eigen::Success) throw NumericError("design matrix lost positive definiteness");
    return llt.solve(y);
}

namespace {

// Shapes are rounded to a 0.01 lattice so density tables get reused across
// refreshes and runs.
double quantise(double x, double lo, double hi) { return std::clamp(std::round(x * 100.0) / 100.0, lo, hi); }

constexpr double kSigmaFloor = 1e-6;

}  // namespace

ShapeBelief::ShapeBelief(double alpha, double beta, double sigma)
    : alpha_(quantise(alpha, 1.01, 2.0)),
      beta_(alpha_ == 2.0 ? 0.0 : quantise(beta, -1.0, 1.0)),
      sigma_(std::max(sigma, kSigmaFloor)),
      location_(beta_ * sigma_ * stable::skew_tangent(alpha_)),
      table_(stable::StandardDensity::shared(alpha_, beta_)) {}

double ShapeBelief::log_density(double residual) const {
    return table_->log_pdf((residual - location_) / sigma_) - std::log(sigma_);
}

double ShapeBelief::upper_tail(double x) const { return 1.0 - table_->cdf((x - location_) / sigma_); }

ShapeBelief fit_belief(std::span<const double> residuals) {
    const std::size_t n = residuals.size();
    if (n >= stable::kMinEcfSamples) {
        const auto fit = stable::estimate_ecf(residuals);
        if (!fit.degenerate) return {fit.params.alpha(), fit.params.beta(), fit.params.sigma()};
        return {2.0, 0.0, kSigmaFloor};
    }
    if (n < 2) return {2.0, 0.0, 1.0};
    double mean = 0.0;
    for (double r : residuals) mean += r;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double r : residuals) ss += (r - mean) * (r - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return {2.0, 0.0, sd / std::numbers::sqrt2};
}

double residual_log_likelihood(const ShapeBelief& belief, std::span<const double> residuals, double shift) {
    double total = 0.0;
    for (double e : residuals) total += belief.log_density(e - shift);
    return total;
}

double eta_log_target(const Vec& eta, const Vec& mu, std::span<const double> residuals, const ShapeBelief& belief,
                      double prior_var) {
    return residual_log_likelihood(belief, residuals, eta.dot(mu)) - 0.5 * eta.squaredNorm() / prior_var;
}

void mh_sweep(Vec& eta, const Vec& mu, std::span<const double> residuals, const ShapeBelief& belief,
              double prior_var, double step, Rng& rng, MhStats* stats) {
    double shift = eta.dot(mu);
    double loglik = residual_log_likelihood(belief, residuals, shift);
    for (Eigen::Index j = 0; j < eta.size(); ++j) {
        // Proposal sd in eta_j units so the induced shift moves by about step * sigma.
        const double sd = step * belief.sigma() / std::max(std::abs(mu(j)), 0.1);
        const double proposal = eta(j) + sd * std_normal(rng);
        const double new_shift = shift + (proposal - eta(j)) * mu(j);
        const double new_loglik = residual_log_likelihood(belief, residuals, new_shift);
        const double log_ratio =
            new_loglik - loglik - 0.5 * (proposal * proposal - eta(j) * eta(j)) / prior_var;
        const double u = uniform01(rng);
        if (stats) ++stats->proposed;
        if (std::log(u) < log_ratio) {
            eta(j) = proposal;
            shift = new_shift;
            loglik = new_loglik;
            if (stats) ++stats->accepted;
        }
    }
}

void mh_location_step(double& location, std::span<const double> rewards, const ShapeBelief& belief,
                      double prior_mean, double prior_var, double step, Rng& rng, MhStats* stats) {
    const double proposal = location + step * belief.sigma() * std_normal(rng);
    auto target = [&](double m) {
        return residual_log_likelihood(belief, rewards, m) - 0.5 * (m - prior_mean) * (m - prior_mean) / prior_var;
    };
    const double log_ratio = target(proposal) - target(location);
    const double u = uniform01(rng);
    if (stats) ++stats->proposed;
    if (std::log(u) < log_ratio) {
        location = proposal;
        if (stats) ++stats->accepted;
    }
}

Vec tail_weights(const std::vector<ShapeBelief>& beliefs, const Vec& means, double cutoff) {
    Vec p(means.size());
    for (Eigen::Index n = 0; n < means.size(); ++n)
        p(n) = beliefs[static_cast<std::size_t>(n)].upper_tail(cutoff - means(n));
    return p;
}

LocalEstimate local_estimate(std::size_t j, const std::vector<Mat>& B, const std::vector<Vec>& mu_bar, double lambda,
                             const Mat& affinity) {
    LocalEstimate out{mu_bar.at(j), B.at(j)};
    Vec pull = Vec::Zero(out.mu_hat.size());
    bool coupled = false;
    for (std::size_t k = 0; k < B.size(); ++k) {
        const double l = affinity(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
        if (k == j || l == 0.0 || lambda == 0.0) continue;
        coupled = true;
        pull += lambda * l * mu_bar[k];
        out.gamma += lambda * lambda * l * l * B[k].llt().solve(Mat::Identity(B[k].rows(), B[k].cols()));
    }
    if (coupled) {
        out.mu_hat -= solve_spd(B[j], pull);
        out.gamma = 0.5 * (out.gamma + out.gamma.transpose());
    }
    return out;
}

Mat initial_user_design(std::size_t dim, double lambda, double l_jj) {
    const auto d = static_cast<Eigen::Index>(dim);
    const double scale = lambda * l_jj;
    return scale > 0.0 ? Mat(scale * Mat::Identity(d, d)) : Mat(Mat::Identity(d, d));
}

std::unique_ptr<bandit::Agent> make_agent(const TsConfig& cfg, std::size_t arms, std::size_t dim, std::uint64_t seed) {
    cfg.validate();
    if (cfg.algorithm == "cts") return std::make_unique<CtsAgent>(dim, cfg, seed);
    if (cfg.algorithm == "acts") return std::make_unique<ActsAgent>(arms, dim, cfg, seed);
    if (cfg.algorithm == "scts") return std::make_unique<SctsAgent>(dim, cfg, seed);
    if (cfg.algorithm == "sacts") return std::make_unique<SactsAgent>(arms, dim, cfg, seed);
    if (cfg.algorithm == "plain_ats") return std::make_unique<PlainAtsAgent>(arms, cfg, seed);
    throw ConfigError("algorithm '" + cfg.algorithm + "' is not a bandit agent");
}

// ---------------------------------------------------------------------------
// Snapshots

nlohmann::json to_json(const Mat& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(row);
    }
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", rows}};
}

Mat mat_from_json(const nlohmann::json& j) {
    const auto r = j.at("rows").get<Eigen::Index>();
    const auto c = j.at("cols").get<Eigen::Index>();
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index k = 0; k < c; ++k) m(i, k) = j.at("data").at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(k)).get<double>();
    return m;
}

nlohmann::json to_json(const TsConfig& cfg) {
    nlohmann::json j = {{"algorithm", cfg.algorithm},
                        {"v", cfg.v},
                        {"lambda", cfg.lambda},
                        {"users", cfg.users},
                        {"refresh_every", cfg.refresh_every},
                        {"pi_samples", cfg.pi_samples},
                        {"mh_step", cfg.mh_step},
                        {"prior_scale", cfg.prior_scale}};
    if (cfg.affinity) j["affinity"] = to_json(*cfg.affinity);
    if (cfg.warmup) j["warmup"] = *cfg.warmup;
    if (cfg.fixed_belief) {
        const auto& p = *cfg.fixed_belief;
        j["fixed_belief"] = {p.alpha(), p.beta(), p.sigma(), p.delta()};
    }
    return j;
}

TsConfig config_from_json(const nlohmann::json& j) {
    TsConfig cfg;
    cfg.algorithm = j.at("algorithm").get<std::string>();
    cfg.v = j.at("v").get<double>();
    cfg.lambda = j.at("lambda").get<double>();
    cfg.users = j.at("users").get<std::size_t>();
    cfg.refresh_every = j.at("refresh_every").get<std::size_t>();
    cfg.pi_samples = j.at("pi_samples").get<std::size_t>();
    cfg.mh_step = j.at("mh_step").get<double>();
    cfg.prior_scale = j.at("prior_scale").get<double>();
    if (j.contains("affinity")) cfg.affinity = mat_from_json(j["affinity"]);
    if (j.contains("warmup")) cfg.warmup = j["warmup"].get<std::size_t>();
    if (j.contains("fixed_belief")) {
        const auto p = j["fixed_belief"].get<std::vector<double>>();
        cfg.fixed_belief = StableParams(p.at(0), p.at(1), p.at(2), p.at(3));
    }
    cfg.validate();
    return cfg;
}

}  // namespace sbrl::ts
