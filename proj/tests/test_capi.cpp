// Exercises the shared library through its C header only.

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <string>
#include <vector>

#include "sbrl/sbrl.h"

TEST_CASE("status codes and thread-local errors") {
    sbrl_experiment* exp = nullptr;
    CHECK(sbrl_experiment_parse("{\"kind\": 3}", nullptr, &exp) == SBRL_ERR_CONFIG);
    CHECK(exp == nullptr);
    CHECK(std::string(sbrl_last_error()).find("format_version") != std::string::npos);
    CHECK(sbrl_experiment_parse(nullptr, nullptr, &exp) == SBRL_ERR_NULL_ARGUMENT);
    CHECK(std::string(sbrl_status_name(SBRL_ERR_DATA)) == "data error");
    sbrl_stable* law = nullptr;
    CHECK(sbrl_stable_create(2.5, 0, 1, 0, &law) == SBRL_ERR_DOMAIN);
    CHECK(sbrl_stable_create(2.0, 0, 1, 0, &law) == SBRL_OK);
    CHECK(std::string(sbrl_last_error()).empty());
    sbrl_stable_free(law);
    CHECK(std::string(sbrl_version()) == "0.1.0");
}

TEST_CASE("experiment handles") {
    sbrl_experiment* exp = nullptr;
    REQUIRE(sbrl_experiment_parse(R"({"format_version": 1, "kind": "tournament", "agents": ["ql", "oracle"]})",
                                  nullptr, &exp) == SBRL_OK);
    char* kind = nullptr;
    char* hash = nullptr;
    REQUIRE(sbrl_experiment_kind(exp, &kind) == SBRL_OK);
    REQUIRE(sbrl_experiment_hash(exp, &hash) == SBRL_OK);
    CHECK(std::string(kind) == "tournament");
    CHECK(std::strlen(hash) == 16);
    sbrl_free_string(kind);
    sbrl_free_string(hash);
    sbrl_experiment_free(exp);
}

TEST_CASE("alpha = 2 is Gaussian with variance 2 sigma^2") {
    sbrl_stable* law = nullptr;
    REQUIRE(sbrl_stable_create(2.0, 0.0, 1.5, 0.3, &law) == SBRL_OK);
    const double var = 2 * 1.5 * 1.5;
    for (double x : {-2.0, 0.3, 1.0, 4.0}) {
        double p = 0.0, c = 0.0;
        REQUIRE(sbrl_stable_pdf(law, x, &p) == SBRL_OK);
        REQUIRE(sbrl_stable_cdf(law, x, &c) == SBRL_OK);
        const double z = x - 0.3;
        CHECK(p == doctest::Approx(std::exp(-z * z / (2 * var)) / std::sqrt(2 * std::numbers::pi * var)).epsilon(1e-6));
        CHECK(c == doctest::Approx(0.5 * std::erfc(-z / std::sqrt(2 * var))).epsilon(1e-6));
    }
    double re = 0, im = 0;
    REQUIRE(sbrl_stable_char_fn(law, 0.5, &re, &im) == SBRL_OK);
    CHECK(re == doctest::Approx(std::exp(-std::pow(1.5 * 0.5, 2)) * std::cos(0.15)));
    CHECK(im == doctest::Approx(std::exp(-std::pow(1.5 * 0.5, 2)) * std::sin(0.15)));

    std::vector<double> xs(20000);
    REQUIRE(sbrl_stable_sample(law, 9, xs.size(), xs.data()) == SBRL_OK);
    double p[4];
    int degenerate = -1;
    REQUIRE(sbrl_estimate_stable(xs.data(), xs.size(), p, &degenerate) == SBRL_OK);
    CHECK(p[0] == doctest::Approx(2.0).epsilon(0.05));
    CHECK(p[2] == doctest::Approx(1.5).epsilon(0.05));
    CHECK(std::abs(p[3] - 0.3) < 0.1);
    CHECK(sbrl_estimate_stable(xs.data(), 10, p, nullptr) == SBRL_ERR_INSUFFICIENT_DATA);
    CHECK(sbrl_estimate_stable_file("/nonexistent/file", p, nullptr) == SBRL_ERR_DATA);
    sbrl_stable_free(law);
}

TEST_CASE("bandit handles: the oracle has zero regret, random does not") {
    const char* env_json = R"({"kind": "linear", "arms": 4, "dim": 3, "horizon": 50})";
    sbrl_bandit_env* env = nullptr;
    REQUIRE(sbrl_bandit_env_create(env_json, 5, &env) == SBRL_OK);
    std::size_t arms = 0, dim = 0, horizon = 0;
    REQUIRE(sbrl_bandit_env_dims(env, &arms, &dim, &horizon) == SBRL_OK);
    CHECK(arms == 4);
    CHECK(dim == 3);
    CHECK(horizon == 50);

    sbrl_bandit_agent* oracle = nullptr;
    REQUIRE(sbrl_bandit_agent_create("oracle", env, 1, &oracle) == SBRL_OK);
    double total = 0.0;
    for (int t = 0; t < 50; ++t) {
        double regret = -1;
        std::size_t arm = 99;
        REQUIRE(sbrl_bandit_step(env, oracle, &arm, nullptr, &regret) == SBRL_OK);
        CHECK(arm < 4);
        total += regret;
    }
    CHECK(total == 0.0);
    sbrl_bandit_agent_free(oracle);

    sbrl_bandit_agent* random = nullptr;
    REQUIRE(sbrl_bandit_agent_create("{\"algorithm\": \"random\"}", env, 1, &random) == SBRL_OK);
    total = 0.0;
    for (int t = 0; t < 50; ++t) {
        double regret = 0;
        REQUIRE(sbrl_bandit_step(env, random, nullptr, nullptr, &regret) == SBRL_OK);
        CHECK(regret >= 0.0);
        total += regret;
    }
    CHECK(total > 0.0);
    sbrl_bandit_agent_free(random);

    sbrl_bandit_agent* bad = nullptr;
    CHECK(sbrl_bandit_agent_create("nope", env, 1, &bad) == SBRL_ERR_CONFIG);
    sbrl_bandit_env_free(env);
    CHECK(sbrl_bandit_env_create("{\"arms\": 0}", 1, &env) == SBRL_ERR_CONFIG);
}
