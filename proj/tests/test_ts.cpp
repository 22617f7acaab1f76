#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "sbrl/bandit.hpp"
#include "sbrl/error.hpp"
#include "sbrl/stable.hpp"
#include "sbrl/ts.hpp"

using namespace sbrl;
using namespace sbrl::ts;
using bandit::EnvKind;
using bandit::EnvSpec;
using bandit::Environment;
using stable::StableParams;

namespace {

RoundContext round_of(const Mat& contexts, std::size_t t = 0, std::optional<std::size_t> user = std::nullopt) {
    RoundContext ctx;
    ctx.t = t;
    ctx.contexts = contexts;
    ctx.user = user;
    return ctx;
}

double min_eigenvalue(const Mat& B) {
    Eigen::SelfAdjointEigenSolver<Mat> es(B);
    return es.eigenvalues().minCoeff();
}

EnvSpec linear_env(std::size_t arms, std::size_t dim, std::size_t horizon) {
    EnvSpec spec;
    spec.kind = EnvKind::linear;
    spec.arms = arms;
    spec.dim = dim;
    spec.horizon = horizon;
    spec.noise = {StableParams(1.8, 0.3, 0.5, 0.0)};
    return spec;
}

TsConfig gaussian_frozen(const std::string& algorithm) {
    TsConfig cfg;
    cfg.algorithm = algorithm;
    cfg.lambda = 0.0;
    cfg.fixed_belief = StableParams(2.0, 0.0, 1.0, 0.0);
    return cfg;
}

// Simpson integration of the direct density from `lo` upwards, coarser far out.
double tail_by_quadrature(const StableParams& p, double lo) {
    auto simpson = [&](double a, double b, int n) {
        const double h = (b - a) / n;
        double s = stable::pdf(p, a) + stable::pdf(p, b);
        for (int k = 1; k < n; ++k) s += (k % 2 ? 4.0 : 2.0) * stable::pdf(p, a + k * h);
        return s * h / 3.0;
    };
    return simpson(lo, lo + 20.0, 2000) + simpson(lo + 20.0, lo + 400.0, 760);
}

}  // namespace

TEST_CASE("config validation") {
    TsConfig cfg;
    CHECK_NOTHROW(cfg.validate());
    cfg.algorithm = "ucb";
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.v = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.users = 2;
    cfg.affinity = Mat::Identity(3, 3);
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    CHECK(TsConfig{}.warmup_pulls(10) == 10);
    CHECK(TsConfig{}.warmup_pulls(1) == 3);
}

TEST_CASE("config JSON round trip") {
    TsConfig cfg;
    cfg.algorithm = "sacts";
    cfg.v = 0.3;
    cfg.users = 2;
    cfg.affinity = Mat::Ones(2, 2);
    cfg.warmup = 7;
    cfg.fixed_belief = StableParams(1.7, 0.2, 0.4, 0.0);
    const auto back = config_from_json(to_json(cfg));
    CHECK(back.algorithm == "sacts");
    CHECK(back.v == 0.3);
    CHECK(*back.warmup == 7);
    CHECK(*back.affinity == *cfg.affinity);
    CHECK(back.fixed_belief->alpha() == 1.7);
}

TEST_CASE("cts starts from mu = 0 and v = 0 is greedy") {
    TsConfig cfg;
    CtsAgent agent(3, cfg, 1);
    CHECK(agent.mu_hat().isZero());

    cfg.v = 0.0;
    CtsAgent greedy(1, cfg, 1);
    Mat ctx(2, 1);
    ctx << 1.0, -1.0;
    greedy.choose(round_of(ctx));
    greedy.observe(1.0);  // mu now positive
    for (int k = 0; k < 20; ++k) {
        CHECK(greedy.choose(round_of(ctx)) == 0);
        greedy.observe(0.5);
    }
    CHECK(greedy.last_pi()(0) == 1.0);
}

TEST_CASE("cts rank-one update matches a from-scratch replay") {
    TsConfig cfg;
    cfg.v = 0.0;
    CtsAgent agent(1, cfg, 3);
    Mat ctx(2, 1);
    ctx << 1.0, -1.0;
    // v = 0 with mu(0) = 0: tie goes to arm 0 and pi = (1, 0), so theta-bar = theta_1.
    REQUIRE(agent.choose(round_of(ctx)) == 0);
    agent.observe(2.0);
    CHECK(agent.B()(0, 0) == doctest::Approx(1.0));
    CHECK(agent.y()(0) == doctest::Approx(0.0));

    // Replay a longer random history with pi taken from the agent.
    TsConfig explore;
    CtsAgent b(2, explore, 9);
    Rng rng(5);
    Mat B = Mat::Identity(2, 2);
    Vec y = Vec::Zero(2);
    for (int t = 0; t < 60; ++t) {
        Mat c(3, 2);
        for (int i = 0; i < 6; ++i) c.data()[i] = std_normal(rng);
        const auto a = b.choose(round_of(c, static_cast<std::size_t>(t)));
        const Vec pi = b.last_pi();
        const double r = c.row(static_cast<Eigen::Index>(a)).sum() + std_normal(rng);
        b.observe(r);
        double xbar[2] = {0, 0};
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 2; ++j) xbar[j] += pi(i) * c(i, j);
        double x[2] = {c(static_cast<Eigen::Index>(a), 0) - xbar[0], c(static_cast<Eigen::Index>(a), 1) - xbar[1]};
        for (int j = 0; j < 2; ++j) {
            y(j) += 2.0 * x[j] * r;
            for (int k = 0; k < 2; ++k) {
                B(j, k) += x[j] * x[k];
                for (int i = 0; i < 3; ++i) B(j, k) += pi(i) * (c(i, j) - xbar[j]) * (c(i, k) - xbar[k]);
            }
        }
    }
    CHECK((B - b.B()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((y - b.y()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("selection probabilities form a distribution") {
    Rng rng(2);
    Mat ctx = Mat::Random(5, 3);
    const Vec pi = selection_probabilities(ctx, Vec::Random(3), Mat::Identity(3, 3) * 4.0, 1.0, 200, rng);
    CHECK(std::abs(pi.sum() - 1.0) < 1e-9);
    CHECK(pi.minCoeff() >= 0.0);
}

TEST_CASE("sample_mvn covariance is scale^2 times the inverse precision") {
    Rng rng(17);
    Mat P(2, 2);
    P << 4.0, 1.0, 1.0, 2.0;
    const Mat cov = P.inverse() * 0.25;
    Mat acc = Mat::Zero(2, 2);
    const int n = 40000;
    for (int k = 0; k < n; ++k) {
        const Vec x = sample_mvn(Vec::Zero(2), P, 0.5, rng);
        acc += x * x.transpose();
    }
    acc /= n;
    CHECK((acc - cov).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("tail weights match numerical integration of the stable tail") {
    std::vector<ShapeBelief> beliefs{ShapeBelief(1.8, 0.0, 1.0), ShapeBelief(1.8, 0.0, 1.0)};
    Vec means(2);
    means << 0.0, 2.0;
    for (double cutoff : {-1.0, 0.0, 1.0, 2.5}) {
        const Vec p = tail_weights(beliefs, means, cutoff);
        CHECK(std::abs(p(0) - tail_by_quadrature(StableParams(1.8, 0.0, 1.0, 0.0), cutoff)) < 1e-3);
        CHECK(std::abs(p(1) - tail_by_quadrature(StableParams(1.8, 0.0, 1.0, 2.0), cutoff)) < 1e-3);
    }
    // Skewed belief: the mean-zero member has a shifted location.
    const ShapeBelief skew(1.6, 0.7, 0.5);
    const auto p = tail_weights({skew}, Vec::Constant(1, 0.3), 1.0);
    CHECK(std::abs(p(0) - tail_by_quadrature(StableParams(1.6, 0.7, 0.5, 0.0).with_mean(0.3), 1.0)) < 1e-3);
}

TEST_CASE("MH step: a zero-width move is always accepted") {
    Rng rng(1);
    const ShapeBelief b(1.7, 0.2, 1.0);
    std::vector<double> res{0.1, -0.3, 2.0};
    Vec eta = Vec::Constant(1, 0.4);
    Vec mu = Vec::Constant(1, 1.0);
    const double lp = eta_log_target(eta, mu, res, b, 1.0);
    CHECK(lp - eta_log_target(eta, mu, res, b, 1.0) == 0.0);
    MhStats stats;
    for (int k = 0; k < 50; ++k) mh_sweep(eta, mu, res, b, 1.0, 1e-300, rng, &stats);
    CHECK(stats.accepted == stats.proposed);
}

TEST_CASE("MH chain matches a grid posterior on a frozen history") {
    Rng data_rng(31);
    const auto rewards = stable::sample(StableParams(1.8, 0.0, 1.0, 2.0), 200, data_rng);
    const ShapeBelief belief(1.8, 0.0, 1.0);
    const double prior_var = 1.0;

    // Oracle: direct-quadrature likelihood on a 101-point grid.
    std::vector<double> sorted = rewards;
    std::sort(sorted.begin(), sorted.end());
    const double centre = sorted[100];
    const int G = 101;
    const double lo = centre - 0.6, step = 1.2 / (G - 1);
    std::vector<double> logp(G);
    for (int g = 0; g < G; ++g) {
        const double d = lo + g * step;
        double s = -0.5 * d * d / prior_var;
        for (double r : rewards) s += std::log(stable::pdf(StableParams(1.8, 0.0, 1.0, d), r));
        logp[g] = s;
    }
    const double mx = *std::max_element(logp.begin(), logp.end());
    std::vector<double> post(G);
    for (int g = 0; g < G; ++g) post[g] = std::exp(logp[g] - mx);
    const double z = std::accumulate(post.begin(), post.end(), 0.0);
    for (auto& p : post) p /= z;

    // Chain on eta with b = 0 and mu = 1, so eta is the location.
    Rng rng(77);
    Vec eta = Vec::Constant(1, centre);
    const Vec mu = Vec::Constant(1, 1.0);
    MhStats stats;
    for (int k = 0; k < 1000; ++k) mh_sweep(eta, mu, rewards, belief, prior_var, 0.1, rng);
    std::vector<double> hist(G, 0.0);
    const int n = 50000;
    for (int k = 0; k < n; ++k) {
        mh_sweep(eta, mu, rewards, belief, prior_var, 0.1, rng, &stats);
        const long cell = std::lround((eta(0) - lo) / step);
        if (cell >= 0 && cell < G) hist[static_cast<std::size_t>(cell)] += 1.0 / n;
    }
    double tv = 0.0, inside = 0.0;
    for (int g = 0; g < G; ++g) {
        tv += std::abs(hist[g] - post[g]);
        inside += hist[g];
    }
    tv = 0.5 * (tv + (1.0 - inside));
    CHECK(tv < 0.1);
    CHECK(stats.accepted > 0);
    CHECK(stats.accepted < stats.proposed);
}

TEST_CASE("acts with one arm puts all weight on it") {
    TsConfig cfg;
    cfg.algorithm = "acts";
    ActsAgent agent(1, 2, cfg, 4);
    Rng rng(8);
    for (int t = 0; t < 30; ++t) {
        Mat c = Mat::Random(1, 2);
        agent.choose(round_of(c, static_cast<std::size_t>(t)));
        CHECK(agent.last_weights()(0) == doctest::Approx(1.0));
        agent.observe(std_normal(rng));
    }
}

TEST_CASE("acts keeps B positive definite and weights normalised") {
    const auto spec = linear_env(4, 3, 200);
    Environment env(spec, 12);
    TsConfig cfg;
    cfg.algorithm = "acts";
    ActsAgent agent(4, 3, cfg, 13);
    for (int t = 0; t < 200; ++t) {
        const auto& ctx = env.next_round();
        const auto a = agent.choose(ctx);
        CHECK(std::abs(agent.last_weights().sum() - 1.0) < 1e-12);
        agent.observe(env.pull(a));
        REQUIRE(min_eigenvalue(agent.B()) > 0.0);
    }
    CHECK_FALSE(agent.warming_up());
    std::size_t pulls = 0;
    for (const auto& arm : agent.arms()) pulls += arm.rewards.size();
    CHECK(pulls == 200);
    CHECK(agent.mh_stats().accepted > 0);
}

TEST_CASE("acts warm-up pulls every arm max(3, d) times first") {
    TsConfig cfg;
    cfg.algorithm = "acts";
    ActsAgent agent(3, 4, cfg, 2);
    Rng rng(3);
    for (int t = 0; t < 12; ++t) {
        CHECK(agent.warming_up());
        const auto a = agent.choose(round_of(Mat::Random(3, 4)));
        agent.observe(std_normal(rng));
        (void)a;
    }
    for (const auto& arm : agent.arms()) CHECK(arm.rewards.size() == 4);
    CHECK_FALSE(agent.warming_up());
}

TEST_CASE("local estimator matches direct matrix arithmetic") {
    Mat B1(2, 2), B2(2, 2);
    B1 << 3.0, 0.5, 0.5, 2.0;
    B2 << 1.5, -0.2, -0.2, 4.0;
    Vec m1(2), m2(2);
    m1 << 0.3, -1.2;
    m2 << 2.0, 0.7;
    Mat L(2, 2);
    L << 1.0, 1.0, 1.0, 1.0;
    const double lambda = 0.5;
    const auto est = local_estimate(0, {B1, B2}, {m1, m2}, lambda, L);

    // mu_hat = m1 - B1^-1 (lambda l12 m2); Gamma = B1 + lambda^2 l12^2 B2^-1, via explicit 2x2 inverses.
    auto inv2 = [](const Mat& M) {
        const double det = M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0);
        Mat I(2, 2);
        I << M(1, 1) / det, -M(0, 1) / det, -M(1, 0) / det, M(0, 0) / det;
        return I;
    };
    const Mat B1i = inv2(B1), B2i = inv2(B2);
    for (int i = 0; i < 2; ++i) {
        const double expect = m1(i) - (B1i(i, 0) * lambda * m2(0) + B1i(i, 1) * lambda * m2(1));
        CHECK(std::abs(est.mu_hat(i) - expect) < 1e-10);
        for (int j = 0; j < 2; ++j) CHECK(std::abs(est.gamma(i, j) - (B1(i, j) + 0.25 * B2i(i, j))) < 1e-10);
    }

    const auto none = local_estimate(1, {B1, B2}, {m1, m2}, 0.0, L);
    CHECK(none.mu_hat == m2);
    CHECK(none.gamma == B2);
}

TEST_CASE("initial user design") {
    CHECK(initial_user_design(2, 0.5, 4.0) == Mat::Identity(2, 2) * 2.0);
    CHECK(initial_user_design(2, 0.0, 1.0) == Mat::Identity(2, 2));
}

TEST_CASE("scts with lambda = 0 and one user reproduces cts") {
    const auto spec = linear_env(5, 4, 100);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        Environment e1(spec, seed), e2(spec, seed);
        TsConfig cfg;
        cfg.lambda = 0.0;
        CtsAgent cts(4, cfg, seed + 100);
        cfg.algorithm = "scts";
        SctsAgent scts(4, cfg, seed + 100);
        for (int t = 0; t < 100; ++t) {
            const auto a = cts.choose(e1.next_round());
            const auto b = scts.choose(e2.next_round());
            REQUIRE(a == b);
            cts.observe(e1.pull(a));
            scts.observe(e2.pull(b));
        }
        CHECK((cts.B() - scts.B(0)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("scts leaves other users untouched") {
    TsConfig cfg;
    cfg.algorithm = "scts";
    cfg.users = 3;
    cfg.lambda = 0.5;
    cfg.affinity = Mat::Ones(3, 3);
    SctsAgent agent(2, cfg, 5);
    const Mat before = agent.B(2);
    for (int t = 0; t < 20; ++t) {
        agent.choose(round_of(Mat::Random(3, 2), static_cast<std::size_t>(t), static_cast<std::size_t>(t % 2)));
        agent.observe(1.0);
    }
    CHECK(agent.B(2) == before);
    CHECK(agent.B(0) != before);
    CHECK_THROWS_AS(agent.choose(round_of(Mat::Random(3, 2), 0, 7)), DomainError);
}

TEST_CASE("sacts with lambda = 0, one user and Gaussian beliefs reproduces acts") {
    const auto spec = linear_env(5, 3, 100);
    for (std::uint64_t seed : {4u, 5u, 6u}) {
        Environment e1(spec, seed), e2(spec, seed);
        ActsAgent acts(5, 3, gaussian_frozen("acts"), seed + 7);
        SactsAgent sacts(5, 3, gaussian_frozen("sacts"), seed + 7);
        for (int t = 0; t < 100; ++t) {
            const auto a = acts.choose(e1.next_round());
            const auto b = sacts.choose(e2.next_round());
            REQUIRE(a == b);
            acts.observe(e1.pull(a));
            sacts.observe(e2.pull(b));
        }
        CHECK((acts.B() - sacts.B(0)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("sacts per-user design matches an independent replay") {
    TsConfig cfg;
    cfg.algorithm = "sacts";
    cfg.users = 2;
    cfg.lambda = 0.5;
    Mat L(2, 2);
    L << 1.0, 0.5, 0.5, 1.0;
    cfg.affinity = L;
    cfg.fixed_belief = StableParams(1.7, 0.3, 0.5, 0.0);
    SactsAgent agent(2, 2, cfg, 21);

    Rng rng(22);
    Mat contexts(2, 2);
    contexts << 1.0, 0.2, -0.3, 0.8;
    std::vector<Mat> B(2, Mat::Identity(2, 2) * 0.5);
    for (int t = 0; t < 100; ++t) {
        const std::size_t user = static_cast<std::size_t>(t % 2);
        std::vector<Vec> eta;
        for (const auto& arm : agent.arms()) eta.push_back(arm.eta);
        const auto a = agent.choose(round_of(contexts, static_cast<std::size_t>(t), user));
        const Vec w = agent.last_weights();
        CHECK(std::abs(w.sum() - 1.0) < 1e-12);
        agent.observe(contexts.row(static_cast<Eigen::Index>(a)).sum() + 0.3 * std_normal(rng));

        double th[2][2], bar[2] = {0, 0};
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                th[i][j] = contexts(i, j) + eta[static_cast<std::size_t>(i)](j);
                bar[j] += w(i) * th[i][j];
            }
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) {
                B[user](j, k) += (th[a][j] - bar[j]) * (th[a][k] - bar[k]);
                for (int i = 0; i < 2; ++i) B[user](j, k) += w(i) * (th[i][j] - bar[j]) * (th[i][k] - bar[k]);
            }
        for (std::size_t u = 0; u < 2; ++u) REQUIRE((B[u] - agent.B(u)).cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("plain_ats: dominant arm and exchangeability") {
    TsConfig cfg;
    cfg.algorithm = "plain_ats";
    PlainAtsAgent agent(2, cfg, 3);
    Rng rng(4);
    const auto noise = StableParams(1.8, 0.0, 0.3, 0.0);
    auto low = stable::sample(noise, 100, rng);
    auto high = stable::sample(noise.with_mean(10.0), 100, rng);
    agent.set_history(0, low);
    agent.set_history(1, high);
    const RoundContext ctx = round_of(Mat::Identity(2, 2));
    for (int k = 0; k < 500; ++k) CHECK(agent.choose(ctx) == 1);

    PlainAtsAgent twin(2, cfg, 5);
    const auto same = stable::sample(noise, 200, rng);
    twin.set_history(0, same);
    twin.set_history(1, same);
    int zeros = 0;
    const int n = 10000;
    for (int k = 0; k < n; ++k) zeros += twin.choose(ctx) == 0;
    CHECK(std::abs(static_cast<double>(zeros) / n - 0.5) < 0.05);
}

TEST_CASE("plain_ats beats a uniform-random policy") {
    EnvSpec spec;
    spec.kind = EnvKind::plain;
    spec.arms = 2;
    spec.horizon = 2000;
    spec.noise = {StableParams(1.8, 0.3, 0.5, 0.0)};
    spec.mu = Vec(2);
    *spec.mu << 0.3, 0.6;
    int wins = 0;
    for (std::uint64_t s = 0; s < 40; ++s) {
        TsConfig cfg;
        cfg.algorithm = "plain_ats";
        Environment e1(spec, derive_seed(500, s)), e2(spec, derive_seed(500, s));
        PlainAtsAgent ats(2, cfg, derive_seed(501, s));
        bandit::RandomAgent rnd(derive_seed(502, s));
        const double ra = bandit::regret(bandit::run_bandit(e1, ats, 0, false)).total;
        const double rr = bandit::regret(bandit::run_bandit(e2, rnd, 0, false)).total;
        wins += ra < rr;
    }
    CHECK(wins >= 38);
}

TEST_CASE("mdp_acts: exact Q after full visitation with deterministic rewards") {
    bandit::MdpSpec m;
    m.states = 2;
    m.actions = 2;
    m.horizon = 3;
    m.next = {0, 1, 0, 1};
    m.reward = {0.5, 0.2, 0.0, 1.0};
    m.initial_states = {0, 1};
    bandit::MdpEnvironment env(m, {}, 1);
    MdpActsAgent agent(2, 2, 3, {}, 2);
    int episodes = 0;
    while (!agent.fully_visited() && episodes < 2000) {
        agent.run_episode(env);
        ++episodes;
    }
    REQUIRE(agent.fully_visited());
    const auto& q = env.true_q();
    for (std::size_t h = 0; h < 3; ++h) CHECK((agent.estimated_q()[h] - q[h]).cwiseAbs().maxCoeff() == 0.0);
    CHECK(min_eigenvalue(agent.B(0)) > 0.0);
}

TEST_CASE("mdp_acts with H = 1 acts on the per-arm draws") {
    bandit::MdpSpec m;
    m.states = 1;
    m.actions = 3;
    m.horizon = 1;
    m.next = {0, 0, 0};
    m.reward = {0.1, 0.9, 0.4};
    m.initial_states = {0};
    bandit::MdpEnvironment env(m, {StableParams(1.8, 0.0, 0.2, 0.0)}, 3);
    MdpActsAgent agent(1, 3, 1, {}, 4);
    std::size_t best = 0;
    for (int k = 0; k < 300; ++k) best += agent.run_episode(env).actions[0] == 1;
    CHECK(best > 200);
    CHECK(agent.greedy_action(0, 0) == 1);
    // Q^1 is just the mean-reward estimate.
    for (std::size_t a = 0; a < 3; ++a)
        if (agent.visits(0, a) > 30) CHECK(std::abs(agent.estimated_q()[0](0, static_cast<Eigen::Index>(a)) - m.reward[a]) < 0.15);
}

TEST_CASE("snapshots resume bit-identically") {
    const auto spec = linear_env(3, 2, 120);
    for (const std::string alg : {"cts", "acts", "scts", "sacts", "plain_ats"}) {
        CAPTURE(alg);
        TsConfig cfg;
        cfg.algorithm = alg;
        Environment env(spec, 40);
        auto agent = make_agent(cfg, 3, 2, 41);
        for (int t = 0; t < 60; ++t) agent->observe(env.pull(agent->choose(env.next_round())));
        nlohmann::json snap;
        if (alg == "cts") snap = dynamic_cast<CtsAgent&>(*agent).snapshot();
        if (alg == "acts") snap = dynamic_cast<ActsAgent&>(*agent).snapshot();
        if (alg == "scts") snap = dynamic_cast<SctsAgent&>(*agent).snapshot();
        if (alg == "sacts") snap = dynamic_cast<SactsAgent&>(*agent).snapshot();
        if (alg == "plain_ats") snap = dynamic_cast<PlainAtsAgent&>(*agent).snapshot();
        const auto text = snap.dump();
        const auto parsed = nlohmann::json::parse(text);
        std::unique_ptr<bandit::Agent> copy;
        if (alg == "cts") copy = CtsAgent::restore(parsed);
        if (alg == "acts") copy = ActsAgent::restore(parsed);
        if (alg == "scts") copy = SctsAgent::restore(parsed);
        if (alg == "sacts") copy = SactsAgent::restore(parsed);
        if (alg == "plain_ats") copy = PlainAtsAgent::restore(parsed);
        for (int t = 0; t < 60; ++t) {
            const auto& ctx = env.next_round();
            const auto a = agent->choose(ctx);
            REQUIRE(copy->choose(ctx) == a);
            const double r = env.pull(a);
            agent->observe(r);
            copy->observe(r);
        }
    }
    CHECK_THROWS_AS(ActsAgent::restore(nlohmann::json{{"format", "sbrl-agent"}, {"version", 99}}), ConfigError);
}

TEST_CASE("observe without choose is an error") {
    TsConfig cfg;
    CtsAgent agent(2, cfg, 1);
    CHECK_THROWS_AS(agent.observe(1.0), DomainError);
    CHECK_THROWS_AS(agent.choose(round_of(Mat::Zero(2, 3))), DomainError);
}
