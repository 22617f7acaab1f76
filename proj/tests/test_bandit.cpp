#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>

#include "sbrl/bandit.hpp"
#include "sbrl/error.hpp"

using namespace sbrl;
using namespace sbrl::bandit;

namespace {

EnvSpec two_arm_fixed(double b1, double b2) {
    EnvSpec spec;
    spec.kind = EnvKind::linear;
    spec.arms = 2;
    spec.dim = 1;
    spec.horizon = 50;
    spec.mu = Vec::Constant(1, 1.0);
    Mat ctx(2, 1);
    ctx << b1, b2;
    spec.fixed_contexts = ctx;
    return spec;
}

MdpSpec random_mdp(std::size_t S, std::size_t A, std::size_t H, Rng& rng) {
    MdpSpec m;
    m.states = S;
    m.actions = A;
    m.horizon = H;
    std::uniform_int_distribution<std::size_t> pick(0, S - 1);
    for (std::size_t k = 0; k < S * A; ++k) {
        m.next.push_back(pick(rng));
        m.reward.push_back(uniform01(rng) * 2.0 - 0.5);
    }
    for (std::size_t s = 0; s < S; ++s) m.initial_states.push_back(s);
    return m;
}

MdpSpec toy_mdp() {
    // Action 1 in state 0 pays little now but leads to the rich state.
    MdpSpec m;
    m.states = 2;
    m.actions = 2;
    m.horizon = 2;
    m.next = {0, 1, 0, 1};
    m.reward = {0.5, 0.2, 0.0, 1.0};
    m.initial_states = {0};
    return m;
}

}  // namespace

TEST_CASE("spec validation rejects inconsistent environments") {
    EnvSpec spec;
    spec.v_process = VProcessSpec{};
    CHECK_THROWS_AS(spec.validate(), SpecError);
    EnvSpec zero;
    zero.arms = 0;
    CHECK_THROWS_AS(zero.validate(), SpecError);
    EnvSpec mdp;
    mdp.kind = EnvKind::adversarial_mdp;
    CHECK_THROWS_AS(mdp.validate(), SpecError);
    CHECK(parse_env_kind("semiparam") == EnvKind::semiparam);
    CHECK_THROWS_AS(parse_env_kind("bogus"), SpecError);
}

TEST_CASE("fixed contexts: the larger inner product is optimal") {
    Environment env(two_arm_fixed(0.9, 0.1), 1);
    for (int t = 0; t < 20; ++t) {
        env.next_round();
        CHECK(env.optimal_arm() == 0);
        CHECK(env.pull(0) == doctest::Approx(0.9));
    }
}

TEST_CASE("constant disturbance leaves the optimal arm unchanged") {
    EnvSpec base;
    base.kind = EnvKind::semiparam;
    base.arms = 5;
    base.dim = 4;
    base.horizon = 200;
    Rng rng(3);
    base.mu = unit_sphere(4, rng);
    base.v_process = VProcessSpec{VProcessSpec::Kind::constant, 0.0, 0.0, 10.0};
    EnvSpec shifted = base;
    shifted.v_process->initial = 5.0;
    Environment a(base, 11), b(shifted, 11);
    for (int t = 0; t < 200; ++t) {
        a.next_round();
        b.next_round();
        REQUIRE(a.current().contexts == b.current().contexts);
        CHECK(a.optimal_arm() == b.optimal_arm());
        CHECK(b.mean_reward(2) - a.mean_reward(2) == doctest::Approx(5.0));
    }
}

TEST_CASE("reflected walk stays in bounds and is shared by all arms") {
    EnvSpec spec;
    spec.kind = EnvKind::semiparam;
    spec.arms = 3;
    spec.dim = 2;
    spec.mu = Vec::Zero(2);
    Environment env(spec, 5);
    for (int t = 0; t < 2000; ++t) {
        env.next_round();
        CHECK(std::abs(env.disturbance()) <= 1.0);
        for (std::size_t i = 0; i < 3; ++i) CHECK(env.mean_reward(i) == doctest::Approx(env.disturbance()));
    }
}

TEST_CASE("empirical arm means match b^T mu within 3 standard errors") {
    EnvSpec spec;
    spec.kind = EnvKind::linear;
    spec.arms = 5;
    spec.dim = 10;
    spec.noise = {stable::StableParams(1.8, 0.3, 1.0, 0.0)};
    Environment env(spec, 99);
    env.next_round();
    const int n = 10000;
    for (std::size_t i = 0; i < 5; ++i) {
        const double truth = env.current().contexts.row(static_cast<Eigen::Index>(i)).dot(env.mu());
        CHECK(env.mean_reward(i) == doctest::Approx(truth).epsilon(1e-12));
        double s = 0.0, ss = 0.0;
        for (int k = 0; k < n; ++k) {
            const double r = env.pull(i);
            s += r;
            ss += r * r;
        }
        const double mean = s / n;
        const double se = std::sqrt((ss / n - mean * mean) / (n - 1));
        CHECK(std::abs(mean - truth) < 3.0 * se);
    }
}

TEST_CASE("unit sphere draws have norm one") {
    Rng rng(4);
    for (int k = 0; k < 50; ++k) CHECK(unit_sphere(10, rng).norm() == doctest::Approx(1.0));
}

TEST_CASE("environment streams are deterministic per seed") {
    EnvSpec spec;
    spec.noise = {stable::StableParams(1.5, -0.2, 0.5, 0.0)};
    Environment a(spec, 42), b(spec, 42);
    RandomAgent ra(1), rb(1);
    const auto ta = run_bandit(a, ra, 300);
    const auto tb = run_bandit(b, rb, 300);
    CHECK(ta.arms == tb.arms);
    CHECK(ta.rewards == tb.rewards);
    for (std::size_t t = 0; t < 300; ++t) CHECK(ta.contexts[t] == tb.contexts[t]);
}

TEST_CASE("regret of the optimal policy is zero") {
    EnvSpec spec;
    spec.noise = {stable::StableParams(1.8, 0.0, 1.0, 0.0)};
    spec.horizon = 300;
    Environment env(spec, 8);
    OracleAgent oracle(env);
    const auto r = regret(run_bandit(env, oracle));
    CHECK(r.total == 0.0);
}

TEST_CASE("alternating arms on means {1, 0.5} costs 25 over 100 rounds") {
    EnvSpec spec;
    spec.kind = EnvKind::plain;
    spec.arms = 2;
    spec.horizon = 100;
    spec.mu = Vec::Zero(2);
    *spec.mu << 1.0, 0.5;
    Environment env(spec, 0);
    struct Alternate : Agent {
        std::size_t next = 0;
        std::string name() const override { return "alternate"; }
        std::size_t choose(const RoundContext&) override { return next++ % 2; }
        void observe(double) override {}
    } agent;
    const auto r = regret(run_bandit(env, agent));
    CHECK(r.total == doctest::Approx(25.0));
    for (std::size_t t = 1; t < r.prefix.size(); ++t) CHECK(r.prefix[t] >= r.prefix[t - 1]);
}

TEST_CASE("random policy regret matches its closed-form expectation") {
    EnvSpec spec;
    spec.horizon = 1000;
    spec.noise = {stable::StableParams(1.8, 0.3, 1.0, 0.0)};
    double realised = 0.0, expected = 0.0;
    for (std::uint64_t s = 0; s < 50; ++s) {
        Environment env(spec, derive_seed(2024, s));
        RandomAgent agent(derive_seed(77, s));
        const auto trace = run_bandit(env, agent);
        realised += regret(trace).total;
        for (const auto& ctx : trace.contexts) {
            const Vec means = ctx * env.mu();
            expected += means.maxCoeff() - means.mean();
        }
    }
    CHECK(std::abs(realised - expected) < 0.05 * expected);
}

TEST_CASE("bayes regret: oracle is zero, random matches T/6 on uniform means") {
    EnvSpec spec;
    spec.kind = EnvKind::plain;
    spec.arms = 2;
    spec.horizon = 300;
    const auto oracle = bayes_regret(
        spec, [](const Environment& env, std::uint64_t) { return std::make_unique<OracleAgent>(env); }, 10, 1);
    CHECK(oracle.mean == 0.0);

    // E|U1 - U2| = 1/3 and a random pick is wrong half the time.
    const auto random = bayes_regret(
        spec, [](const Environment&, std::uint64_t seed) { return std::make_unique<RandomAgent>(seed); }, 400, 2);
    const double analytic = 300.0 / 6.0;
    CHECK(random.lower <= analytic);
    CHECK(random.upper >= analytic);
    CHECK(random.per_run.size() == 400);

    const auto two = bayes_regret(
        spec, [](const Environment&, std::uint64_t seed) { return std::make_unique<RandomAgent>(seed); }, 2, 3);
    CHECK(two.per_run.size() == 2);
    CHECK(two.lower <= two.mean);
    CHECK(two.upper >= two.mean);
    CHECK_THROWS(bayes_regret(
        spec, [](const Environment&, std::uint64_t seed) { return std::make_unique<RandomAgent>(seed); }, 1, 3));
}

TEST_CASE("backward induction equals enumeration on small MDPs") {
    Rng rng(123);
    int checked = 0;
    for (std::size_t S = 1; S <= 4; ++S)
        for (std::size_t A = 1; A <= 4; ++A)
            for (std::size_t H = 1; S * A * H <= 64 && H <= 6; ++H) {
                const auto m = random_mdp(S, A, H, rng);
                const auto q = backward_q(m);
                REQUIRE(q.size() == H);
                for (std::size_t h = 0; h < H; ++h)
                    for (std::size_t s = 0; s < S; ++s)
                        for (std::size_t a = 0; a < A; ++a) {
                            CHECK(q[h](static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) ==
                                  doctest::Approx(enumerate_q(m, h, s, a)).epsilon(1e-12));
                            ++checked;
                        }
            }
    CHECK(checked > 200);
}

TEST_CASE("toy MDP Q values by hand") {
    const auto q = backward_q(toy_mdp());
    CHECK(q[1](0, 0) == 0.5);
    CHECK(q[1](1, 1) == 1.0);
    CHECK(q[0](0, 0) == doctest::Approx(1.0));  // 0.5 then 0.5
    CHECK(q[0](0, 1) == doctest::Approx(1.2));  // 0.2 then 1.0
}

TEST_CASE("mdp episodes: optimal policy has zero regret, H=1 is a bandit round") {
    MdpEnvironment env(toy_mdp(), {}, 3);
    const auto q = env.true_q();
    auto optimal = [&](std::size_t h, std::size_t s) {
        Eigen::Index a = 0;
        q[h].row(static_cast<Eigen::Index>(s)).maxCoeff(&a);
        return static_cast<std::size_t>(a);
    };
    const auto ep = mdp_episode(env, optimal);
    CHECK(ep.regret == doctest::Approx(0.0));
    CHECK(ep.total == doctest::Approx(1.2));
    const auto bad = mdp_episode(env, [](std::size_t, std::size_t) { return std::size_t{0}; });
    CHECK(bad.regret == doctest::Approx(0.2));

    auto one = toy_mdp();
    one.horizon = 1;
    MdpEnvironment single(one, {}, 3);
    const auto e1 = mdp_episode(single, [](std::size_t, std::size_t) { return std::size_t{1}; });
    CHECK(e1.regret == doctest::Approx(0.5 - 0.2));
    CHECK(e1.states.size() == 1);
}

TEST_CASE("invalid actions abort the episode") {
    MdpEnvironment env(toy_mdp(), {}, 3);
    CHECK_THROWS_AS(mdp_episode(env, [](std::size_t, std::size_t) { return std::size_t{7}; }), DomainError);
}

TEST_CASE("greedy adversary picks the state with the largest agent gap") {
    auto m = toy_mdp();
    m.initial_states = {0, 1};
    m.adversary = Adversary::greedy;
    MdpEnvironment env(m, {}, 1);
    // Playing 0 everywhere: gap 0.2 in state 0, gap 1.0 in state 1.
    CHECK(env.begin_episode([](std::size_t) { return std::size_t{0}; }) == 1);
    CHECK_THROWS_AS(env.begin_episode(), SpecError);
}

TEST_CASE("MDP JSON round trip") {
    Rng rng(9);
    auto m = random_mdp(3, 2, 4, rng);
    m.adversary = Adversary::greedy;
    const auto back = parse_mdp_json(mdp_to_json(m));
    CHECK(back.states == 3);
    CHECK(back.next == m.next);
    CHECK(back.reward == m.reward);
    CHECK(back.adversary == Adversary::greedy);
    CHECK_THROWS_AS(parse_mdp_json(R"({"states":2,"actions":1,"horizon":1,"transitions":[[0],[5]],"rewards":[[0],[0]]})"),
                    SpecError);
}

TEST_CASE("recommendation CSV adapter and replay") {
    const auto path = std::filesystem::temp_directory_path() / "sbrl_reco_test.csv";
    {
        std::ofstream out(path);
        out << "user_id,item_id,reward,f1,f2\n";
        out << "u1,i1,1,0.5,0.0\n";
        out << "u2,i2,0,0.0,1.0\n";
        out << "u1,i2,3,0.0,1.0\n";
    }
    const auto data = load_recommendation_csv(path.string());
    CHECK(data.user_ids.size() == 2);
    CHECK(data.item_ids.size() == 2);
    CHECK(data.context_dim() == 4);
    CHECK(data.events[2].reward == 1.0);
    const Vec x = data.context(1, 1);
    CHECK(x(1) == 1.0);
    CHECK(x(3) == 1.0);

    struct Always : Agent {
        std::string name() const override { return "always"; }
        std::size_t choose(const RoundContext&) override { return 1; }
        void observe(double) override { ++seen; }
        int seen = 0;
    } agent;
    const auto res = replay_evaluate(data, agent);
    CHECK(res.matched == 2);
    CHECK(agent.seen == 2);
    CHECK(res.click_rate() == doctest::Approx(0.5));

    {
        std::ofstream out(path);
        out << "user_id,item_id,reward,f1\nu1,i1,1,0.5\nu1,i1,1,0.7\n";
    }
    CHECK_THROWS_AS(load_recommendation_csv(path.string()), DataError);
    {
        std::ofstream out(path);
        out << "user,item_id,reward\n";
    }
    CHECK_THROWS_AS(load_recommendation_csv(path.string()), DataError);
    std::filesystem::remove(path);
}
