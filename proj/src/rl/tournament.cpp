#include "sbrl/tournament.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <sstream>
#include <thread>

#include "sbrl/error.hpp"
#include "sbrl/rl.hpp"
#include "sbrl/ts.hpp"

namespace sbrl::rl {

namespace {

std::size_t argmax_row(const Mat& m, std::size_t row) {
    Eigen::Index best = 0;
    m.row(static_cast<Eigen::Index>(row)).maxCoeff(&best);
    return static_cast<std::size_t>(best);
}

// Exposes the MDP to a tabular learner with (stage, state) folded into one
// index, so the finite horizon needs no discount.
class StagedEnv : public DiscreteEnv {
public:
    StagedEnv(bandit::MdpEnvironment& env, const TabularAgent& agent) : env_(env), agent_(agent) {}
    std::size_t states() const override { return env_.spec().horizon * env_.spec().states; }
    std::size_t actions() const override { return env_.spec().actions; }
    std::size_t reset() override {
        return env_.begin_episode([this](std::size_t s) { return agent_.greedy(s); });
    }
    DiscreteStep step(std::size_t action) override {
        const double r = env_.act(action);
        return {env_.stage() * env_.spec().states + env_.state(), r, env_.done()};
    }

private:
    bandit::MdpEnvironment& env_;
    const TabularAgent& agent_;
};

class TabularPlayer : public EpisodicPlayer {
public:
    TabularPlayer(const bandit::MdpSpec& mdp, bool sarsa, std::uint64_t seed)
        : agent_(mdp.horizon * mdp.states, mdp.actions, config(sarsa), seed) {}
    double play(bandit::MdpEnvironment& env) override {
        StagedEnv staged(env, agent_);
        return agent_.train(staged, 1).front();
    }

private:
    static TabularConfig config(bool sarsa) {
        TabularConfig c;
        c.sarsa = sarsa;
        c.gamma = 1.0;
        return c;
    }
    TabularAgent agent_;
};

class DqnPlayer : public EpisodicPlayer {
public:
    DqnPlayer(const bandit::MdpSpec& mdp, std::size_t episodes, std::uint64_t seed)
        : S_(mdp.states), H_(mdp.horizon), agent_(S_ + H_, actions(mdp.actions), config(mdp, episodes), seed) {}

    double play(bandit::MdpEnvironment& env) override {
        std::size_t s = env.begin_episode([this](std::size_t x) { return agent_.greedy(features(0, x)); });
        double ret = 0.0;
        while (!env.done()) {
            const Vec f = features(env.stage(), s);
            const std::size_t a = agent_.select(f, true);
            const double r = env.act(a);
            ret += r;
            s = env.state();
            const bool done = env.done();
            agent_.observe(f, a, r, done ? f : features(env.stage(), s), done);
        }
        return ret;
    }

private:
    static std::vector<Vec> actions(std::size_t A) {
        std::vector<Vec> out;
        for (std::size_t a = 0; a < A; ++a) out.push_back(Vec::Constant(1, static_cast<double>(a)));
        return out;
    }
    static DqnConfig config(const bandit::MdpSpec& mdp, std::size_t episodes) {
        DqnConfig c;
        c.reward_scale = 1.0;
        c.epsilon_decay_steps = std::max<std::size_t>(1, episodes * mdp.horizon / 2);
        return c;
    }
    Vec features(std::size_t stage, std::size_t s) const {
        Vec f = Vec::Zero(static_cast<Eigen::Index>(S_ + H_));
        f(static_cast<Eigen::Index>(s)) = 1.0;
        f(static_cast<Eigen::Index>(S_ + std::min(stage, H_ - 1))) = 1.0;
        return f;
    }
    std::size_t S_, H_;
    DqnAgent agent_;
};

// Myopic contextual TS: arm a in state s has context e_{sA+a}.
class ContextualPlayer : public EpisodicPlayer {
public:
    ContextualPlayer(const bandit::MdpSpec& mdp, std::uint64_t seed)
        : S_(mdp.states), A_(mdp.actions), agent_(S_ * A_, ts::TsConfig{}, seed) {}

    double play(bandit::MdpEnvironment& env) override {
        std::size_t s = env.begin_episode([this](std::size_t x) { return agent_.choose(context(x)); });
        double ret = 0.0;
        while (!env.done()) {
            const std::size_t a = agent_.choose(context(s));
            const double r = env.act(a);
            agent_.observe(r);
            ret += r;
            s = env.state();
        }
        return ret;
    }

private:
    bandit::RoundContext context(std::size_t s) const {
        bandit::RoundContext ctx;
        ctx.contexts = Mat::Zero(static_cast<Eigen::Index>(A_), static_cast<Eigen::Index>(S_ * A_));
        for (std::size_t a = 0; a < A_; ++a)
            ctx.contexts(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(s * A_ + a)) = 1.0;
        return ctx;
    }
    std::size_t S_, A_;
    ts::CtsAgent agent_;
};

class ActsPlayer : public EpisodicPlayer {
public:
    ActsPlayer(const bandit::MdpSpec& mdp, std::uint64_t seed)
        : agent_(mdp.states, mdp.actions, mdp.horizon, ts::MdpActsConfig{}, seed) {}
    double play(bandit::MdpEnvironment& env) override { return agent_.run_episode(env).total; }

private:
    ts::MdpActsAgent agent_;
};

class RandomPlayer : public EpisodicPlayer {
public:
    RandomPlayer(const bandit::MdpSpec& mdp, std::uint64_t seed) : A_(mdp.actions), rng_(seed) {}
    double play(bandit::MdpEnvironment& env) override {
        auto pick = [this](std::size_t, std::size_t) {
            return std::uniform_int_distribution<std::size_t>(0, A_ - 1)(rng_);
        };
        return bandit::mdp_episode(env, pick).total;
    }

private:
    std::size_t A_;
    Rng rng_;
};

class OraclePlayer : public EpisodicPlayer {
public:
    double play(bandit::MdpEnvironment& env) override {
        const auto& q = env.true_q();
        return bandit::mdp_episode(env, [&q](std::size_t h, std::size_t s) { return argmax_row(q[h], s); }).total;
    }
};

// Rounds the upper-triangle share so a cell and its mirror always agree.
std::string cell(const Mat& wins, std::size_t i, std::size_t j) {
    const auto lo = static_cast<Eigen::Index>(std::min(i, j)), hi = static_cast<Eigen::Index>(std::max(i, j));
    const long upper = std::lround(100.0 * wins(lo, hi));
    const long left = i < j ? upper : 100 - upper;
    return std::to_string(left) + ":" + std::to_string(100 - left);
}

std::string percent(double share) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(1) << 100.0 * share;
    return os.str();
}

}  // namespace

const std::vector<std::string>& player_names() {
    static const std::vector<std::string> names{"ql", "dqn", "sarsa", "cb-ts", "ac-ts", "random", "oracle"};
    return names;
}

std::string player_label(const std::string& name) {
    if (name == "ql") return "QL";
    if (name == "dqn") return "DQL";
    if (name == "sarsa") return "SARSA";
    if (name == "cb-ts") return "CB-TS";
    if (name == "ac-ts") return "AC-TS";
    if (name == "random") return "Random";
    if (name == "oracle") return "Oracle";
    throw ConfigError("unknown tournament agent: " + name);
}

std::unique_ptr<EpisodicPlayer> make_player(const std::string& name, const bandit::MdpSpec& mdp,
                                            std::size_t episodes, std::uint64_t seed) {
    if (name == "ql") return std::make_unique<TabularPlayer>(mdp, false, seed);
    if (name == "sarsa") return std::make_unique<TabularPlayer>(mdp, true, seed);
    if (name == "dqn") return std::make_unique<DqnPlayer>(mdp, episodes, seed);
    if (name == "cb-ts") return std::make_unique<ContextualPlayer>(mdp, seed);
    if (name == "ac-ts") return std::make_unique<ActsPlayer>(mdp, seed);
    if (name == "random") return std::make_unique<RandomPlayer>(mdp, seed);
    if (name == "oracle") return std::make_unique<OraclePlayer>();
    throw ConfigError("unknown tournament agent: " + name);
}

bandit::MdpSpec random_mdp(std::size_t states, std::size_t actions, std::size_t horizon,
                           bandit::Adversary adversary, Rng& rng) {
    bandit::MdpSpec m;
    m.states = states;
    m.actions = actions;
    m.horizon = horizon;
    m.adversary = adversary;
    std::uniform_int_distribution<std::size_t> pick(0, states - 1);
    for (std::size_t k = 0; k < states * actions; ++k) {
        m.next.push_back(pick(rng));
        m.reward.push_back(uniform01(rng));
    }
    for (std::size_t s = 0; s < states; ++s) m.initial_states.push_back(s);
    m.validate();
    return m;
}

void TournamentConfig::validate() const {
    if (mdp) {
        mdp->validate();
    } else if (states == 0 || actions < 2 || horizon == 0) {
        throw ConfigError("tournament needs states >= 1, actions >= 2 and horizon >= 1");
    }
    if (rounds == 0 || episodes == 0) throw ConfigError("tournament needs rounds >= 1 and episodes >= 1");
    if (noise.size() > 1 && noise.size() != (mdp ? mdp->actions : actions))
        throw ConfigError("tournament noise needs zero, one or one law per action");
}

Vec tournament_round(const std::vector<std::string>& agents, const TournamentConfig& cfg, std::size_t round) {
    Rng env_rng(derive_seed(cfg.seed, 2 * round));
    const bandit::MdpSpec mdp =
        cfg.mdp ? *cfg.mdp : random_mdp(cfg.states, cfg.actions, cfg.horizon, cfg.adversary, env_rng);
    const std::uint64_t env_seed = derive_seed(cfg.seed, 2 * round + 1);
    const std::uint64_t agent_seed = derive_seed(env_seed, 7);
    Vec out(static_cast<Eigen::Index>(agents.size()));
    for (std::size_t i = 0; i < agents.size(); ++i) {
        bandit::MdpEnvironment env(mdp, cfg.noise, env_seed);
        auto player = make_player(agents[i], mdp, cfg.episodes, agent_seed);
        double total = 0.0;
        for (std::size_t e = 0; e < cfg.episodes; ++e) total += player->play(env);
        out(static_cast<Eigen::Index>(i)) = total;
    }
    return out;
}

TournamentResult tournament(const std::vector<std::string>& agents, const TournamentConfig& cfg,
                            std::size_t workers) {
    if (agents.size() < 2) throw ConfigError("a tournament needs at least two agents");
    for (const auto& a : agents) player_label(a);
    cfg.validate();

    Mat returns = Mat::Zero(static_cast<Eigen::Index>(cfg.rounds), static_cast<Eigen::Index>(agents.size()));

    workers = std::clamp<std::size_t>(workers, 1, cfg.rounds);
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t r = w; r < cfg.rounds; r += workers)
                    returns.row(static_cast<Eigen::Index>(r)) = tournament_round(agents, cfg, r).transpose();
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);

    return summarize_tournament(agents, std::move(returns));
}

TournamentResult summarize_tournament(const std::vector<std::string>& agents, Mat returns) {
    const auto N = static_cast<Eigen::Index>(agents.size());
    if (N < 2 || returns.cols() != N || returns.rows() == 0)
        throw DomainError("tournament returns need one column per agent and at least one round");
    TournamentResult res;
    res.agents = agents;
    res.returns = std::move(returns);
    const auto R = res.returns.rows();
    res.wins = Mat::Constant(N, N, 0.5);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < N; ++j) {
            if (i == j) continue;
            double w = 0.0;
            for (Eigen::Index r = 0; r < R; ++r) {
                const double a = res.returns(r, i), b = res.returns(r, j);
                w += a > b ? 1.0 : a == b ? 0.5 : 0.0;
            }
            res.wins(i, j) = w / static_cast<double>(R);
        }
    res.avg_wins = Vec::Zero(N);
    for (Eigen::Index i = 0; i < N; ++i)
        res.avg_wins(i) = (res.wins.row(i).sum() - 0.5) / static_cast<double>(N - 1);
    return res;
}

std::string TournamentResult::table_text() const {
    const std::size_t N = agents.size();
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> head{"RL"};
    for (const auto& a : agents) head.push_back(player_label(a));
    rows.push_back(head);
    for (std::size_t i = 0; i < N; ++i) {
        std::vector<std::string> row{player_label(agents[i])};
        for (std::size_t j = 0; j < N; ++j)
            row.push_back(i == j ? "-" : cell(wins, i, j));
        rows.push_back(row);
    }
    std::vector<std::string> avg{"avg wins(%)"};
    for (std::size_t i = 0; i < N; ++i) avg.push_back(percent(avg_wins(static_cast<Eigen::Index>(i))));
    rows.push_back(avg);

    std::vector<std::size_t> width(N + 1, 0);
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::ostringstream os;
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
            if (c + 1 < row.size()) os << "  ";
        }
        os << '\n';
    }
    return os.str();
}

std::string TournamentResult::table_csv() const {
    const std::size_t N = agents.size();
    std::ostringstream os;
    os << "RL";
    for (const auto& a : agents) os << ',' << player_label(a);
    os << '\n';
    for (std::size_t i = 0; i < N; ++i) {
        os << player_label(agents[i]);
        for (std::size_t j = 0; j < N; ++j)
            os << ',' << (i == j ? "-" : cell(wins, i, j));
        os << '\n';
    }
    os << "avg wins(%)";
    for (std::size_t i = 0; i < N; ++i) os << ',' << percent(avg_wins(static_cast<Eigen::Index>(i)));
    os << '\n';
    return os.str();
}

}  // namespace sbrl::rl
