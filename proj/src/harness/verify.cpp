#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <regex>
#include <sstream>

#include <unistd.h>

#include "sbrl/backtest.hpp"
#include "sbrl/bandit.hpp"
#include "sbrl/error.hpp"
#include "sbrl/harness.hpp"
#include "sbrl/market.hpp"
#include "sbrl/net.hpp"
#include "sbrl/rl.hpp"
#include "sbrl/stable.hpp"
#include "sbrl/tournament.hpp"
#include "sbrl/ts.hpp"

namespace sbrl::harness {

namespace fs = std::filesystem;
using stable::StableParams;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string measured;
};

// 1 ------------------------------------------------------------------------

Outcome check_stable() {
    const auto t0 = Clock::now();
    const std::vector<double> freqs{0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0};
    double worst = 0.0;
    std::uint64_t seed = 100;
    for (double alpha : {1.2, 1.5, 1.8, 2.0})
        for (double beta : {-0.8, 0.0, 0.8}) {
            const StableParams p(alpha, beta, 1.0, 0.0);
            Rng rng(seed++);
            const auto xs = stable::sample(p, 100'000, rng);
            for (double u : freqs) {
                double re = 0.0, im = 0.0;
                for (double x : xs) {
                    re += std::cos(u * x);
                    im += std::sin(u * x);
                }
                const std::complex<double> ecf(re / static_cast<double>(xs.size()), im / static_cast<double>(xs.size()));
                worst = std::max(worst, std::abs(ecf - stable::char_fn(p, u)));
            }
        }
    const double secs = since(t0);
    return {worst < 0.03 && secs < 30.0, "max_modulus_err=" + fmt("%.4f", worst) + " settings=9 freqs=10"};
}

// 2 ------------------------------------------------------------------------

Outcome check_ecf() {
    const auto t0 = Clock::now();
    const StableParams truth(1.5, 0.5, 1.0, 0.0);
    double err[4] = {0, 0, 0, 0};
    const int seeds = 20;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(derive_seed(20, static_cast<std::uint64_t>(s)));
        const auto fit = stable::estimate_ecf(stable::sample(truth, 10'000, rng)).params;
        err[0] += std::abs(fit.alpha() - truth.alpha()) / seeds;
        err[1] += std::abs(fit.beta() - truth.beta()) / seeds;
        err[2] += std::abs(fit.sigma() - truth.sigma()) / seeds;
        err[3] += std::abs(fit.delta() - truth.delta()) / seeds;
    }
    const double worst = *std::max_element(err, err + 4);
    return {worst <= 0.1 && since(t0) < 60.0,
            "mae alpha=" + fmt("%.4f", err[0]) + " beta=" + fmt("%.4f", err[1]) + " sigma=" + fmt("%.4f", err[2]) +
                " delta=" + fmt("%.4f", err[3])};
}

// 3 ------------------------------------------------------------------------

Outcome check_posterior() {
    const auto t0 = Clock::now();
    const StableParams law(1.8, 0.0, 1.0, 2.0);
    Rng data_rng(31);
    const auto rewards = stable::sample(law, 200, data_rng);
    const ts::ShapeBelief belief(1.8, 0.0, 1.0);
    const double prior_var = 1.0;

    // Grid posterior over the location from direct-quadrature densities.
    auto sorted = rewards;
    std::sort(sorted.begin(), sorted.end());
    const double centre = sorted[100];
    const int G = 101;
    const double lo = centre - 0.6, step = 1.2 / (G - 1);
    std::vector<double> post(G);
    for (int g = 0; g < G; ++g) {
        const double d = lo + g * step;
        double s = -0.5 * d * d / prior_var;
        for (double r : rewards) s += std::log(stable::pdf(StableParams(1.8, 0.0, 1.0, d), r));
        post[g] = s;
    }
    const double mx = *std::max_element(post.begin(), post.end());
    for (auto& p : post) p = std::exp(p - mx);
    const double z = std::accumulate(post.begin(), post.end(), 0.0);
    for (auto& p : post) p /= z;

    Rng rng(77);
    Vec eta = Vec::Constant(1, centre);
    const Vec mu = Vec::Constant(1, 1.0);
    for (int k = 0; k < 1000; ++k) ts::mh_sweep(eta, mu, rewards, belief, prior_var, 0.1, rng);
    std::vector<double> hist(G, 0.0);
    const int n = 50000;
    for (int k = 0; k < n; ++k) {
        ts::mh_sweep(eta, mu, rewards, belief, prior_var, 0.1, rng);
        const long cell = std::lround((eta(0) - lo) / step);
        if (cell >= 0 && cell < G) hist[static_cast<std::size_t>(cell)] += 1.0 / n;
    }
    double tv = 0.0, inside = 0.0;
    for (int g = 0; g < G; ++g) {
        tv += std::abs(hist[g] - post[g]);
        inside += hist[g];
    }
    tv = 0.5 * (tv + (1.0 - inside));
    return {tv < 0.1 && since(t0) < 60.0, "tv=" + fmt("%.4f", tv) + " grid=101 history=200"};
}

// 4 ------------------------------------------------------------------------

Outcome check_regret() {
    const auto t0 = Clock::now();
    bandit::EnvSpec spec;
    spec.kind = bandit::EnvKind::linear;
    spec.arms = 5;
    spec.dim = 10;
    spec.horizon = 2000;
    spec.noise = {StableParams(1.8, 0.3, 0.5, 0.0)};
    std::map<std::string, std::pair<double, double>> r;  // R(1000), R(2000) summed over seeds
    for (const std::string alg : {"random", "cts", "acts"})
        for (std::uint64_t s = 0; s < 20; ++s) {
            bandit::Environment env(spec, derive_seed(7, 2 * s));
            std::unique_ptr<bandit::Agent> agent;
            if (alg == "random") {
                agent = std::make_unique<bandit::RandomAgent>(derive_seed(7, 2 * s + 1));
            } else {
                ts::TsConfig cfg;
                cfg.algorithm = alg;
                agent = ts::make_agent(cfg, spec.arms, spec.dim, derive_seed(7, 2 * s + 1));
            }
            const auto rg = bandit::regret(bandit::run_bandit(env, *agent, 0, false));
            r[alg].first += rg.prefix[999];
            r[alg].second += rg.prefix[1999];
        }
    const double rc = r["cts"].second / r["cts"].first, ra = r["acts"].second / r["acts"].first;
    const double vc = r["cts"].second / r["random"].second, va = r["acts"].second / r["random"].second;
    const bool pass = rc < 1.8 && ra < 1.8 && vc <= 0.6 && va <= 0.6 && since(t0) < 600.0;
    return {pass, "ratio cts=" + fmt("%.3f", rc) + " acts=" + fmt("%.3f", ra) + " vs_random cts=" + fmt("%.3f", vc) +
                      " acts=" + fmt("%.3f", va)};
}

// 5 ------------------------------------------------------------------------

template <class A, class B>
bool same_choices(A& a, B& b, const bandit::EnvSpec& spec, std::uint64_t seed) {
    bandit::Environment e1(spec, seed), e2(spec, seed);
    for (std::size_t t = 0; t < spec.horizon; ++t) {
        const auto x = a.choose(e1.next_round());
        const auto y = b.choose(e2.next_round());
        if (x != y) return false;
        a.observe(e1.pull(x));
        b.observe(e2.pull(y));
    }
    return true;
}

Outcome check_degeneracy() {
    bandit::EnvSpec spec;
    spec.kind = bandit::EnvKind::linear;
    spec.arms = 5;
    spec.dim = 4;
    spec.horizon = 100;
    spec.noise = {StableParams(1.8, 0.3, 0.5, 0.0)};
    int matched = 0, total = 0;
    for (std::uint64_t s = 0; s < 5; ++s) {
        const auto env_seed = derive_seed(50, 2 * s), agent_seed = derive_seed(50, 2 * s + 1);
        ts::TsConfig g;
        g.lambda = 0.0;
        g.fixed_belief = StableParams(2.0, 0.0, 1.0, 0.0);
        {
            g.algorithm = "cts";
            ts::CtsAgent a(spec.dim, g, agent_seed);
            g.algorithm = "scts";
            ts::SctsAgent b(spec.dim, g, agent_seed);
            matched += same_choices(a, b, spec, env_seed);
        }
        {
            g.algorithm = "acts";
            ts::ActsAgent a(spec.arms, spec.dim, g, agent_seed);
            g.algorithm = "sacts";
            ts::SactsAgent b(spec.arms, spec.dim, g, agent_seed);
            matched += same_choices(a, b, spec, env_seed);
        }
        total += 2;
    }
    return {matched == total, "identical_runs=" + std::to_string(matched) + "/" + std::to_string(total) +
                                  " (scts~cts, sacts~acts, 100 rounds)"};
}

// 6 ------------------------------------------------------------------------

bandit::MdpSpec toy_mdp(std::size_t horizon) {
    bandit::MdpSpec m;
    m.states = 2;
    m.actions = 2;
    m.horizon = horizon;
    m.next = {0, 1, 0, 1};
    m.reward = {0.5, 0.2, 0.0, 1.0};
    m.initial_states = {0, 1};
    return m;
}

Outcome check_mdp() {
    const auto m = toy_mdp(2);
    int recovered = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        bandit::MdpEnvironment env(m, {StableParams(1.8, 0.0, 0.2, 0.0)}, derive_seed(60, 2 * s));
        ts::MdpActsAgent agent(2, 2, 2, {}, derive_seed(60, 2 * s + 1));
        for (int e = 0; e < 500; ++e) agent.run_episode(env);
        bool ok = true;
        for (std::size_t h = 0; h < 2; ++h)
            for (std::size_t st = 0; st < 2; ++st) {
                const std::size_t best = bandit::enumerate_q(m, h, st, 1) > bandit::enumerate_q(m, h, st, 0) ? 1 : 0;
                ok = ok && agent.greedy_action(h, st) == best;
            }
        recovered += ok;
    }

    // Deterministic rewards: Q is exact once every pair has been tried.
    const auto m3 = toy_mdp(3);
    bandit::MdpEnvironment env(m3, {}, 1);
    ts::MdpActsAgent agent(2, 2, 3, {}, 2);
    for (int e = 0; e < 2000 && !agent.fully_visited(); ++e) agent.run_episode(env);
    double q_err = agent.fully_visited() ? 0.0 : INFINITY;
    if (agent.fully_visited())
        for (std::size_t h = 0; h < 3; ++h)
            q_err = std::max(q_err, (agent.estimated_q()[h] - env.true_q()[h]).cwiseAbs().maxCoeff());
    return {recovered >= 18 && q_err == 0.0,
            "optimal_seeds=" + std::to_string(recovered) + "/20 exact_q_max_err=" + fmt("%.3g", q_err)};
}

// 7 ------------------------------------------------------------------------

struct FdResult {
    double worst = 0.0;
    std::size_t kinks = 0;  // coordinates whose +-h step flips a ReLU
};

// Central differences of L = sum(U .* f(X)) against backward(). A step that
// moves any ReLU pre-activation across zero differences a non-smooth
// function, so that coordinate is counted and skipped.
FdResult max_fd_error(net::Mlp net, const Mat& X, const Mat& U, double h = 1e-5) {
    net::Mlp::Cache base;
    net.forward(X, base);
    auto probe = [&](const net::Mlp& n, const Mat& x, bool& kink) {
        net::Mlp::Cache c;
        const double l = n.forward(x, c).cwiseProduct(U).sum();
        for (std::size_t k = 0; k < c.pre.size(); ++k) {
            if (n.activations()[k] != net::Activation::relu) continue;
            if (((c.pre[k].array() > 0) != (base.pre[k].array() > 0)).any()) kink = true;
        }
        return l;
    };
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); };
    Mat gx;
    net::Mlp analytic = net;
    analytic.params() = net.backward(base, U, &gx);
    const Vec g = analytic.flat();
    const Vec theta = net.flat();
    FdResult r;
    auto take = [&](double grad, double lp, double lm, bool kink) {
        if (kink) {
            ++r.kinks;
            return;
        }
        r.worst = std::max(r.worst, rel(grad, (lp - lm) / (2 * h)));
    };
    for (Eigen::Index k = 0; k < theta.size(); ++k) {
        Vec tp = theta, tm = theta;
        tp(k) += h;
        tm(k) -= h;
        net::Mlp a = net, b = net;
        a.set_flat(tp);
        b.set_flat(tm);
        bool kink = false;
        const double lp = probe(a, X, kink), lm = probe(b, X, kink);
        take(g(k), lp, lm, kink);
    }
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.cols(); ++j) {
            Mat xp = X, xm = X;
            xp(i, j) += h;
            xm(i, j) -= h;
            bool kink = false;
            const double lp = probe(net, xp, kink), lm = probe(net, xm, kink);
            take(gx(i, j), lp, lm, kink);
        }
    return r;
}

Outcome check_gradients() {
    Rng rng(7);
    auto random_mat = [&](std::size_t r, std::size_t c) {
        Mat m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std_normal(rng);
        return m;
    };
    // Actor and critic as built by the DDPG agent on a 2-stock market, the
    // backtest DQN over 3^2 sell/hold/buy actions, and the tournament DQN
    // on one-hot (state, stage) features.
    const std::size_t state_dim = 2 * 2 + 1;
    rl::DdpgAgent ddpg(state_dim, 2, 1.0, {}, 3);
    const rl::DqnConfig dqn;
    std::vector<std::size_t> qnet{state_dim}, tour{4 + 3};
    for (auto h : dqn.hidden) {
        qnet.push_back(h);
        tour.push_back(h);
    }
    qnet.push_back(9);
    tour.push_back(3);
    std::vector<std::pair<std::string, net::Mlp>> nets{
        {"actor", ddpg.members().front().actor},
        {"critic", ddpg.members().front().critic},
        {"dqn", net::Mlp(qnet, net::Activation::relu, net::Activation::identity, 5)},
        {"tournament_dqn", net::Mlp(tour, net::Activation::relu, net::Activation::identity, 6)}};
    double worst = 0.0;
    std::size_t kinks = 0, coords = 0;
    std::string detail;
    for (auto& [name, n] : nets) {
        const Mat X = random_mat(n.inputs(), 16);
        const auto r = max_fd_error(n, X, random_mat(n.outputs(), 16));
        worst = std::max(worst, r.worst);
        kinks += r.kinks;
        coords += n.parameter_count() + static_cast<std::size_t>(X.size());
        detail += " " + name + "=" + fmt("%.2e", r.worst);
    }
    // Skipped kink coordinates must stay rare or the check says little.
    return {worst < 1e-4 && kinks * 100 <= coords,
            "max_rel_err=" + fmt("%.2e", worst) + detail + " kink_skips=" + std::to_string(kinks) + "/" +
                std::to_string(coords)};
}

// 8 ------------------------------------------------------------------------

Outcome check_ddpg() {
    const auto t0 = Clock::now();
    Mat c(12, 1);
    for (Eigen::Index t = 0; t < 12; ++t) c(t, 0) = t % 2 == 0 ? 11.0 : 10.0;
    rl::MarketEnvConfig ec;
    ec.initial_cash = 1000.0;
    rl::MarketEnv env(market::series_from_closes(c), ec);

    // Omniscient return: the best all-in / all-out sequence.
    double best = -1e300;
    for (std::size_t code = 0; code < (std::size_t{1} << env.steps()); ++code) {
        rl::MarketEnv e = env;
        e.reset();
        double ret = 0.0;
        for (std::size_t k = 0; k < env.steps(); ++k) ret += e.step(Vec::Constant(1, (code >> k & 1) ? 1.0 : -1.0)).reward;
        best = std::max(best, ret);
    }
    int reached = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        rl::DdpgAgent agent(env.state_dim(), 1, 1.0, {}, derive_seed(40, s));
        bool hit = false;
        agent.train(env, 300, [&](std::size_t, const rl::EpisodeLog&) {
            if (hit) return;
            rl::MarketEnv eval = env;
            hit = agent.evaluate(eval) >= 0.9 * best;
        });
        reached += hit;
    }
    const double secs = since(t0);
    return {reached >= 16 && secs < 600.0,
            "seeds_reaching_0.9_omniscient=" + std::to_string(reached) + "/20 omniscient=" + fmt("%.1f", best)};
}

// 9 ------------------------------------------------------------------------

Outcome check_cppi() {
    int violations = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const double k = 1.0 + static_cast<double>(seed % 5);
        market::SynthConfig sc;
        sc.stocks = 2;
        sc.days = 120;
        sc.volatility = 0.6;
        sc.stable_alpha = 1.5;
        sc.max_loss = 0.9 / k;  // a day's loss never wipes out the cushion
        market::TradingEnv env(market::synth_market(sc, derive_seed(90, seed)), {}, 1000.0);
        const market::CppiConfig cfg{800.0, k};
        while (!env.done()) {
            env.step(market::cppi_expert_action(env.state(), cfg));
            violations += env.state().asset() < cfg.floor;
        }
    }

    rl::BacktestConfig bc;
    bc.synth.days = 504;
    bc.synth.stocks = 2;
    std::vector<double> dd_plain, dd_cppi;
    for (std::uint64_t s = 1; s <= 20; ++s) {
        const auto sp = market::split(market::synth_market(bc.synth, s), bc.split_ratio);
        const auto seed = derive_seed(s, 1);
        dd_plain.push_back(market::metrics(rl::backtest_strategy("ddpg", sp.train, sp.test, bc, seed)).max_drawdown);
        dd_cppi.push_back(market::metrics(rl::backtest_strategy("cppi_ddpg", sp.train, sp.test, bc, seed)).max_drawdown);
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    const double mp = median(dd_plain), mc = median(dd_cppi);
    return {violations == 0 && mc <= mp, "floor_violations=" + std::to_string(violations) +
                                             "/1000 markets median_maxd cppi_ddpg=" + fmt("%.4f", mc) +
                                             " ddpg=" + fmt("%.4f", mp)};
}

// 10 -----------------------------------------------------------------------

Outcome check_accounting() {
    Rng rng(5);
    market::MarketConfig cfg;
    cfg.cost_bps = 25;
    double worst = 0.0;
    for (std::uint64_t e = 0; e < 1000; ++e) {
        market::SynthConfig sc;
        sc.stocks = 1 + e % 4;
        sc.days = 60;
        market::TradingEnv env(market::synth_market(sc, derive_seed(100, e)), cfg, 1000.0);
        while (!env.done()) {
            Vec a(static_cast<Eigen::Index>(sc.stocks));
            for (auto& x : a) x = (uniform01(rng) - 0.5) * 20.0;
            env.step(a);
        }
        const auto replay = env.replay_equity();
        if (replay.size() != env.equity().size()) return {false, "replay length differs in episode " + std::to_string(e)};
        for (std::size_t t = 0; t < replay.size(); ++t) worst = std::max(worst, std::abs(replay[t] - env.equity()[t]));
    }
    return {worst <= 1e-8, "max_abs_diff=" + fmt("%.3g", worst) + " episodes=1000"};
}

// 11 and 12 ----------------------------------------------------------------

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct SmallConfig {
    std::string name;
    std::string json;
};

std::vector<SmallConfig> small_configs(const fs::path& dir) {
    {
        Rng rng(3);
        std::ofstream out(dir / "samples.txt");
        for (double x : stable::sample(StableParams(1.6, 0.2, 1.0, 0.5), 2000, rng)) out << x << '\n';
    }
    return {
        {"bandit-regret",
         R"({"format_version":1,"kind":"bandit-regret","seeds":[1,2],
             "env":{"kind":"linear","arms":3,"dim":4,"horizon":150},
             "agents":["cts","acts","random","oracle"]})"},
        {"bayes-regret",
         R"({"format_version":1,"kind":"bayes-regret","seeds":[1,2],"runs":3,
             "env":{"kind":"linear","arms":3,"dim":3,"horizon":60},"agents":["cts","random"]})"},
        {"tournament",
         R"({"format_version":1,"kind":"tournament","seeds":[1,2],
             "tournament":{"rounds":3,"episodes":20},
             "agents":["ql","dqn","sarsa","cb-ts","ac-ts","random","oracle"]})"},
        {"backtest",
         R"({"format_version":1,"kind":"backtest","seeds":[1],
             "market":{"days":90,"stocks":2},"training":{"episodes":2},
             "agents":["up","dqn","ddpg","cppi_ddpg","ad-ts","cppi","buy_and_hold"]})"},
        {"execution",
         R"({"format_version":1,"kind":"execution","seeds":[1,2],
             "market":{"days":120,"stocks":1,"bars_per_day":4},"training":{"episodes":1},
             "agents":["ddpg","cppi","buy_and_hold"]})"},
        {"estimate-stable", R"({"format_version":1,"kind":"estimate-stable","input":"samples.txt"})"},
    };
}

fs::path scratch_dir(const std::string& scratch, const std::string& leaf) {
    fs::path base = scratch.empty() ? fs::temp_directory_path() / ("sbrl_verify_" + std::to_string(::getpid())) : fs::path(scratch);
    base /= leaf;
    fs::remove_all(base);
    fs::create_directories(base);
    return base;
}

RunSummary run_small(const SmallConfig& c, const fs::path& dir, const fs::path& out, std::size_t workers) {
    RunOptions o;
    o.workers = workers;
    o.output = out.string();
    o.force = true;
    return run(parse_experiment(c.json, dir.string()), o);
}

Outcome check_reproducibility(const std::string& scratch) {
    const auto dir = scratch_dir(scratch, "reproducibility");
    std::size_t files = 0;
    for (const auto& c : small_configs(dir)) {
        const auto a = run_small(c, dir, dir / (c.name + "_a"), 1);
        const auto b = run_small(c, dir, dir / (c.name + "_b"), 2);
        if (!a.failures.empty()) return {false, c.name + " cell failed: " + a.failures.front()};
        if (a.files != b.files) return {false, c.name + ": file lists differ"};
        auto names = a.files;
        names.push_back("manifest.json");
        for (const auto& f : names) {
            if (slurp(dir / (c.name + "_a") / f) != slurp(dir / (c.name + "_b") / f))
                return {false, c.name + ": " + f + " differs"};
            ++files;
        }
    }
    return {true, "identical_files=" + std::to_string(files) + " kinds=6 (workers 1 vs 2)"};
}

std::vector<std::vector<std::string>> csv_rows(const fs::path& p) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(slurp(p));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

std::string table2_problem(const fs::path& p, const std::vector<std::string>& labels) {
    const auto rows = csv_rows(p);
    const std::size_t n = labels.size();
    if (rows.size() != n + 2) return "table2 has " + std::to_string(rows.size()) + " rows";
    if (rows[0].size() != n + 1 || rows[0][0] != "RL") return "table2 header";
    const std::regex ratio(R"((\d{1,3}):(\d{1,3}))"), pct(R"(\d{1,3}\.\d)");
    for (std::size_t i = 0; i < n; ++i) {
        const auto& r = rows[i + 1];
        if (r.size() != n + 1 || r[0] != labels[i] || rows[0][i + 1] != labels[i]) return "table2 row " + labels[i];
        for (std::size_t j = 0; j < n; ++j) {
            std::smatch m;
            if (i == j) {
                if (r[j + 1] != "-") return "table2 diagonal";
            } else if (!std::regex_match(r[j + 1], m, ratio) || std::stoi(m[1]) + std::stoi(m[2]) != 100) {
                return "table2 cell '" + r[j + 1] + "'";
            }
        }
    }
    const auto& last = rows.back();
    if (last.size() != n + 1 || last[0] != "avg wins(%)") return "table2 average row";
    for (std::size_t j = 1; j <= n; ++j)
        if (!std::regex_match(last[j], pct)) return "table2 average cell '" + last[j] + "'";
    return {};
}

std::string table3_problem(const fs::path& p, const std::vector<std::string>& labels) {
    const auto rows = csv_rows(p);
    if (rows.size() != labels.size() + 1) return "table3 has " + std::to_string(rows.size()) + " rows";
    if (rows[0] != std::vector<std::string>{"Strategy", "AR", "SR", "MaxD"}) return "table3 header";
    const std::regex cell(R"(-?\d+\.\d\d%|n/a)");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto& r = rows[i + 1];
        if (r.size() != 4 || r[0] != labels[i]) return "table3 row " + labels[i];
        for (std::size_t j = 1; j < 4; ++j)
            if (!std::regex_match(r[j], cell)) return "table3 cell '" + r[j] + "'";
    }
    return {};
}

Outcome check_format(const std::string& scratch) {
    const auto dir = scratch_dir(scratch, "format");
    const auto configs = small_configs(dir);
    std::vector<std::string> players, strategies;
    for (const auto& n : rl::player_names()) players.push_back(rl::player_label(n));
    for (const auto& n : rl::strategy_names()) strategies.push_back(rl::strategy_label(n));
    for (const auto& c : configs) {
        if (c.name == "tournament") {
            if (!run_small(c, dir, dir / c.name, 1).failures.empty()) return {false, "tournament cells failed"};
            if (auto e = table2_problem(dir / c.name / "table2.csv", players); !e.empty()) return {false, e};
            if (!fs::exists(dir / c.name / "table2.txt")) return {false, "table2.txt missing"};
        }
        if (c.name == "backtest") {
            if (!run_small(c, dir, dir / c.name, 1).failures.empty()) return {false, "backtest cells failed"};
            if (auto e = table3_problem(dir / c.name / "table3.csv", strategies); !e.empty()) return {false, e};
            if (!fs::exists(dir / c.name / "table3.txt")) return {false, "table3.txt missing"};
        }
    }
    return {true, "table2 " + std::to_string(players.size()) + "x" + std::to_string(players.size()) +
                      " ratio cells + avg row; table3 " + std::to_string(strategies.size()) + " rows x AR,SR,MaxD"};
}

struct Entry {
    int id;
    std::string name;
    std::function<Outcome(const std::string&)> fn;
};

const std::vector<Entry>& entries() {
    static const std::vector<Entry> list{
        {1, "stable", [](const std::string&) { return check_stable(); }},
        {2, "ecf", [](const std::string&) { return check_ecf(); }},
        {3, "posterior", [](const std::string&) { return check_posterior(); }},
        {4, "regret", [](const std::string&) { return check_regret(); }},
        {5, "degeneracy", [](const std::string&) { return check_degeneracy(); }},
        {6, "mdp", [](const std::string&) { return check_mdp(); }},
        {7, "gradients", [](const std::string&) { return check_gradients(); }},
        {8, "ddpg", [](const std::string&) { return check_ddpg(); }},
        {9, "cppi", [](const std::string&) { return check_cppi(); }},
        {10, "accounting", [](const std::string&) { return check_accounting(); }},
        {11, "reproducibility", check_reproducibility},
        {12, "format", check_format},
    };
    return list;
}

}  // namespace

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& e : entries()) n.push_back(e.name);
        n.push_back("all");
        return n;
    }();
    return names;
}

std::vector<Criterion> verify(const std::string& suite, const std::string& scratch,
                              const std::function<void(const Criterion&)>& on_result) {
    const auto& names = suite_names();
    if (std::find(names.begin(), names.end(), suite) == names.end()) {
        std::string list;
        for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
        throw ConfigError("unknown suite '" + suite + "' (expected one of " + list + ")");
    }
    std::vector<Criterion> out;
    for (const auto& e : entries()) {
        if (suite != "all" && suite != e.name) continue;
        Criterion c;
        c.id = e.id;
        c.name = e.name;
        const auto t0 = Clock::now();
        try {
            const auto o = e.fn(scratch);
            c.pass = o.pass;
            c.measured = o.measured;
        } catch (const std::exception& ex) {
            c.pass = false;
            c.measured = std::string("error: ") + ex.what();
        }
        c.seconds = since(t0);
        if (on_result) on_result(c);
        out.push_back(std::move(c));
    }
    return out;
}

std::string report_line(const Criterion& c) {
    std::ostringstream os;
    os << "criterion " << c.id << ' ' << c.name << ' ' << (c.pass ? "PASS" : "FAIL") << ' ' << c.measured << " ("
       << fmt("%.1f", c.seconds) << " s)";
    return os.str();
}

}  // namespace sbrl::harness
