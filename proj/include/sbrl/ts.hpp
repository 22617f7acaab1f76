#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbrl/bandit.hpp"
#include "sbrl/linalg.hpp"
#include "sbrl/rng.hpp"
#include "sbrl/stable.hpp"

namespace sbrl::ts {

using bandit::RoundContext;
using stable::StableParams;

struct TsConfig {
    std::string algorithm = "cts";  // cts, acts, scts, sacts, mdp_acts, plain_ats
    double v = 1.0;                 // exploration scale of the mu draw
    double lambda = 1.0;            // graph weight (scts, sacts)
    std::size_t users = 1;
    std::optional<Mat> affinity;    // users x users; identity when absent
    std::size_t refresh_every = 25;
    std::size_t pi_samples = 200;
    double mh_step = 0.1;           // proposal sd in units of sigma-hat
    std::optional<std::size_t> warmup;  // pulls per arm; max(3, d) when absent
    double prior_scale = 1.0;       // prior variance = prior_scale * sigma-hat^2
    /// Freezes the (alpha, beta, sigma) beliefs; no ECF refresh happens.
    std::optional<StableParams> fixed_belief;

    void validate() const;
    std::size_t warmup_pulls(std::size_t d) const { return warmup.value_or(std::max<std::size_t>(3, d)); }
};

// ---------------------------------------------------------------------------
// Shared machinery

/// Draw from N(mean, scale^2 * precision^-1).
Vec sample_mvn(const Vec& mean, const Mat& precision, double scale, Rng& rng);

/// Index of the largest row score thetas * w; ties go to the lowest index.
std::size_t argmax_score(const Mat& thetas, const Vec& w);

/// Monte-Carlo estimate of P(a(t) = i) under mu ~ N(mean, v^2 precision^-1).
Vec selection_probabilities(const Mat& contexts, const Vec& mean, const Mat& precision, double v,
                            std::size_t samples, Rng& rng);

/// Centred design update with weights w (summing to 1):
///   B += (x_a - xbar)(x_a - xbar)^T + sum_k w_k (x_k - xbar)(x_k - xbar)^T
///   y += 2 (x_a - xbar) r,  xbar = sum_k w_k x_k.
void centred_update(Mat& B, Vec& y, const Mat& thetas, const Vec& weights, std::size_t chosen, double reward);

/// Solves B x = y through a Cholesky factorisation.
Vec solve_spd(const Mat& B, const Vec& y);

/// Noise belief of one arm: a mean-zero stable law with shape (alpha, beta)
/// and scale sigma, evaluated through a cached density table.
class ShapeBelief {
public:
    ShapeBelief() : ShapeBelief(2.0, 0.0, 1.0) {}
    ShapeBelief(double alpha, double beta, double sigma);

    double alpha() const { return alpha_; }
    double beta() const { return beta_; }
    double sigma() const { return sigma_; }
    /// Location delta of the mean-zero member.
    double location() const { return location_; }
    StableParams params() const { return {alpha_, beta_, sigma_, location_}; }

    double log_density(double residual) const;
    /// P(Z > x) for Z with this law.
    double upper_tail(double x) const;

private:
    double alpha_;
    double beta_;
    double sigma_;
    double location_;
    std::shared_ptr<const stable::StandardDensity> table_;
};

/// ECF fit of (alpha, beta, sigma) from residuals; falls back to the Gaussian
/// endpoint (alpha = 2, sigma = sd / sqrt 2) below kMinEcfSamples.
ShapeBelief fit_belief(std::span<const double> residuals);

/// sum_s log f(e_s - shift).
double residual_log_likelihood(const ShapeBelief& belief, std::span<const double> residuals, double shift);

/// Log posterior of the parameter offset eta: residual likelihood at
/// shift eta^T mu plus an N(0, prior_var I) prior.
double eta_log_target(const Vec& eta, const Vec& mu, std::span<const double> residuals, const ShapeBelief& belief,
                      double prior_var);

struct MhStats {
    std::size_t proposed = 0;
    std::size_t accepted = 0;
};

/// One Metropolis-within-Gibbs pass over the coordinates of eta with
/// symmetric normal proposals of sd step * sigma / |mu_j|.
void mh_sweep(Vec& eta, const Vec& mu, std::span<const double> residuals, const ShapeBelief& belief,
              double prior_var, double step, Rng& rng, MhStats* stats = nullptr);

/// Scalar location version used by the non-contextual and MDP agents.
void mh_location_step(double& location, std::span<const double> rewards, const ShapeBelief& belief,
                      double prior_mean, double prior_var, double step, Rng& rng, MhStats* stats = nullptr);

/// Tail weights P_n = P(Z_n > cutoff) for Z_n with mean `means[n]`.
Vec tail_weights(const std::vector<ShapeBelief>& beliefs, const Vec& means, double cutoff);

// ---------------------------------------------------------------------------
// Agents

/// Contextual Thompson sampling with centred updates.
class CtsAgent : public bandit::Agent {
public:
    CtsAgent(std::size_t dim, TsConfig cfg, std::uint64_t seed);
    std::string name() const override { return "cts"; }
    std::size_t choose(const RoundContext& ctx) override;
    void observe(double reward) override;

    const Mat& B() const { return B_; }
    const Vec& y() const { return y_; }
    Vec mu_hat() const { return solve_spd(B_, y_); }
    const Vec& last_pi() const { return pi_; }

    nlohmann::json snapshot() const;
    static std::unique_ptr<CtsAgent> restore(const nlohmann::json& j);

private:
    TsConfig cfg_;
    Rng rng_;
    Mat B_;
    Vec y_;
    Mat ctx_;
    Vec pi_;
    std::size_t chosen_ = 0;
    bool pending_ = false;
};

/// Per-arm state of the asymmetric agents.
struct ArmState {
    ShapeBelief belief;
    double prior_var = 1.0;
    Vec eta;
    std::vector<Vec> contexts;
    std::vector<double> rewards;
    std::vector<std::size_t> users;
    std::size_t since_refresh = 0;
};

/// Contextual asymmetric alpha-Thompson sampling. theta_n is the
/// arm's context plus a learnt offset eta_n sampled by Metropolis-Hastings
/// under a stable likelihood of the arm's residuals.
class ActsAgent : public bandit::Agent {
public:
    ActsAgent(std::size_t arms, std::size_t dim, TsConfig cfg, std::uint64_t seed);
    std::string name() const override { return "acts"; }
    std::size_t choose(const RoundContext& ctx) override;
    void observe(double reward) override;

    const Mat& B() const { return B_; }
    const Vec& y() const { return y_; }
    Vec mu_hat() const { return solve_spd(B_, y_); }
    const Vec& last_weights() const { return weights_; }
    const std::vector<ArmState>& arms() const { return arms_; }
    bool warming_up() const;
    const MhStats& mh_stats() const { return stats_; }

    nlohmann::json snapshot() const;
    static std::unique_ptr<ActsAgent> restore(const nlohmann::json& j);

private:
    void initialise_beliefs(const Vec& mu);
    std::vector<double> residuals(const ArmState& arm, const Vec& mu) const;

    TsConfig cfg_;
    Rng rng_;
    Mat B_;
    Vec y_;
    std::vector<ArmState> arms_;
    bool beliefs_ready_ = false;
    Mat thetas_;
    Vec weights_;
    Vec last_context_;
    std::size_t chosen_ = 0;
    bool pending_ = false;
    MhStats stats_;
};

/// Semi-contextual Thompson sampling with a user graph.
class SctsAgent : public bandit::Agent {
public:
    SctsAgent(std::size_t dim, TsConfig cfg, std::uint64_t seed);
    std::string name() const override { return "scts"; }
    std::size_t choose(const RoundContext& ctx) override;
    void observe(double reward) override;

    const Mat& B(std::size_t user) const { return B_.at(user); }
    const Vec& y(std::size_t user) const { return y_.at(user); }
    Vec mu_bar(std::size_t user) const { return solve_spd(B_.at(user), y_.at(user)); }

    nlohmann::json snapshot() const;
    static std::unique_ptr<SctsAgent> restore(const nlohmann::json& j);

private:
    TsConfig cfg_;
    Rng rng_;
    std::vector<Mat> B_;
    std::vector<Vec> y_;
    Mat ctx_;
    Vec pi_;
    std::size_t user_ = 0;
    std::size_t chosen_ = 0;
    bool pending_ = false;
};

/// Semi-contextual asymmetric alpha-Thompson sampling.
class SactsAgent : public bandit::Agent {
public:
    SactsAgent(std::size_t arms, std::size_t dim, TsConfig cfg, std::uint64_t seed);
    std::string name() const override { return "sacts"; }
    std::size_t choose(const RoundContext& ctx) override;
    void observe(double reward) override;

    const Mat& B(std::size_t user) const { return B_.at(user); }
    const Vec& y(std::size_t user) const { return y_.at(user); }
    Vec mu_bar(std::size_t user) const { return solve_spd(B_.at(user), y_.at(user)); }
    const std::vector<ArmState>& arms() const { return arms_; }
    const Vec& last_weights() const { return weights_; }

    nlohmann::json snapshot() const;
    static std::unique_ptr<SactsAgent> restore(const nlohmann::json& j);

private:
    std::vector<Vec> all_mu_bar() const;
    std::vector<double> residuals(const ArmState& arm, const std::vector<Vec>& mu_bar) const;

    TsConfig cfg_;
    Rng rng_;
    std::vector<Mat> B_;
    std::vector<Vec> y_;
    std::vector<ArmState> arms_;
    bool beliefs_ready_ = false;
    Mat thetas_;
    Vec weights_;
    Vec last_context_;
    std::size_t user_ = 0;
    std::size_t chosen_ = 0;
    bool pending_ = false;
};

/// Local estimator of scts and sacts for user j:
///   mu_hat_j = mu_bar_j - B_j^-1 sum_{k != j} lambda l_jk mu_bar_k
///   Gamma_j  = B_j + lambda^2 sum_{k != j} l_jk^2 B_k^-1
struct LocalEstimate {
    Vec mu_hat;
    Mat gamma;
};
LocalEstimate local_estimate(std::size_t j, const std::vector<Mat>& B, const std::vector<Vec>& mu_bar, double lambda,
                             const Mat& affinity);

/// Initial per-user design B_j = lambda l_jj I, or I when that is not
/// positive definite.
Mat initial_user_design(std::size_t dim, double lambda, double l_jj);

/// Non-contextual asymmetric alpha-TS: one scalar mean per arm.
class PlainAtsAgent : public bandit::Agent {
public:
    PlainAtsAgent(std::size_t arms, TsConfig cfg, std::uint64_t seed);
    std::string name() const override { return "plain_ats"; }
    std::size_t choose(const RoundContext& ctx) override;
    void observe(double reward) override;

    /// Seeds an arm with a fixed history (tests, resumption).
    void set_history(std::size_t arm, std::vector<double> rewards);
    double theta(std::size_t arm) const { return theta_.at(arm); }
    const ShapeBelief& belief(std::size_t arm) const { return beliefs_.at(arm); }

    nlohmann::json snapshot() const;
    static std::unique_ptr<PlainAtsAgent> restore(const nlohmann::json& j);

private:
    void refresh(std::size_t arm);

    TsConfig cfg_;
    Rng rng_;
    std::vector<std::vector<double>> rewards_;
    std::vector<ShapeBelief> beliefs_;
    std::vector<double> prior_mean_;
    std::vector<double> prior_var_;
    std::vector<double> theta_;
    std::vector<std::size_t> since_refresh_;
    std::size_t chosen_ = 0;
    bool pending_ = false;
};

struct MdpActsConfig {
    double prior_mean = 0.0;  // for never-visited (state, action) pairs
    double prior_var = 1.0;
    double mh_step = 0.1;
    std::size_t refresh_every = 25;
    std::optional<StableParams> fixed_belief;
};

/// Per-(state, action) Thompson draws of the mean reward,
/// greedy play on the sampled Q, posterior-mean Q by backward induction.
class MdpActsAgent {
public:
    MdpActsAgent(std::size_t states, std::size_t actions, std::size_t horizon, MdpActsConfig cfg, std::uint64_t seed);

    bandit::Episode run_episode(bandit::MdpEnvironment& env);

    /// Q from posterior means and learnt transitions, h = 0..H-1.
    const std::vector<Mat>& estimated_q() const { return q_hat_; }
    std::size_t greedy_action(std::size_t stage, std::size_t state) const;
    bool fully_visited() const;
    std::size_t visits(std::size_t s, std::size_t a) const { return rewards_[s * A_ + a].size(); }
    const Mat& B(std::size_t state) const { return B_.at(state); }

private:
    std::vector<Mat> sampled_q();
    std::vector<Mat> backward(const std::vector<double>& r) const;
    void refresh_estimates();

    std::size_t S_, A_, H_;
    MdpActsConfig cfg_;
    Rng rng_;
    std::vector<std::vector<double>> rewards_;
    std::vector<ShapeBelief> beliefs_;
    std::vector<double> theta_;
    std::vector<std::size_t> since_refresh_;
    std::vector<std::optional<std::size_t>> next_;
    std::vector<Mat> B_;
    std::vector<Vec> y_;
    std::vector<Mat> q_hat_;
};

/// Builds a bandit agent by algorithm name (cts, acts, scts, sacts, plain_ats).
std::unique_ptr<bandit::Agent> make_agent(const TsConfig& cfg, std::size_t arms, std::size_t dim, std::uint64_t seed);

// Snapshot helpers shared by the agents.
nlohmann::json to_json(const Mat& m);
Mat mat_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TsConfig& cfg);
TsConfig config_from_json(const nlohmann::json& j);

}  // namespace sbrl::ts
