#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "sbrl/bandit.hpp"
#include "sbrl/error.hpp"

namespace sbrl::bandit {

using nlohmann::json;

void MdpSpec::validate() const {
    auto fail = [](const std::string& what) { throw SpecError("invalid MDP: " + what); };
    if (states == 0 || actions == 0 || horizon == 0) fail("states, actions and horizon must be >= 1");
    if (next.size() != states * actions) fail("transition table must have S*A entries");
    if (reward.size() != states * actions) fail("reward table must have S*A entries");
    for (auto s : next)
        if (s >= states) fail("transition to a state outside [0, S)");
    for (double r : reward)
        if (!std::isfinite(r)) fail("rewards must be finite");
    if (initial_states.empty()) fail("initial_states must not be empty");
    for (auto s : initial_states)
        if (s >= states) fail("initial state outside [0, S)");
}

std::vector<Mat> backward_q(const MdpSpec& mdp) {
    mdp.validate();
    const auto S = static_cast<Eigen::Index>(mdp.states);
    const auto A = static_cast<Eigen::Index>(mdp.actions);
    std::vector<Mat> q(mdp.horizon, Mat::Zero(S, A));
    for (std::size_t k = mdp.horizon; k-- > 0;) {
        for (Eigen::Index s = 0; s < S; ++s) {
            for (Eigen::Index a = 0; a < A; ++a) {
                const auto idx = mdp.index(static_cast<std::size_t>(s), static_cast<std::size_t>(a));
                double future = 0.0;
                if (k + 1 < mdp.horizon) future = q[k + 1].row(static_cast<Eigen::Index>(mdp.next[idx])).maxCoeff();
                q[k](s, a) = mdp.reward[idx] + future;
            }
        }
    }
    return q;
}

double enumerate_q(const MdpSpec& mdp, std::size_t stage, std::size_t state, std::size_t action) {
    mdp.validate();
    if (stage >= mdp.horizon || state >= mdp.states || action >= mdp.actions)
        throw DomainError("enumerate_q index out of range");
    const std::size_t rest = mdp.horizon - stage - 1;
    std::size_t count = 1;
    for (std::size_t i = 0; i < rest; ++i) count *= mdp.actions;

    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> seq(rest, 0);
    for (std::size_t code = 0; code < count; ++code) {
        std::size_t c = code;
        for (auto& a : seq) {
            a = c % mdp.actions;
            c /= mdp.actions;
        }
        std::size_t s = state;
        std::size_t a = action;
        double total = 0.0;
        for (std::size_t k = 0;; ++k) {
            const auto idx = mdp.index(s, a);
            total += mdp.reward[idx];
            if (k == rest) break;
            s = mdp.next[idx];
            a = seq[k];
        }
        best = std::max(best, total);
    }
    return best;
}

MdpSpec parse_mdp_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SpecError(std::string("MDP JSON parse error: ") + e.what());
    }
    MdpSpec m;
    try {
        m.states = j.at("states").get<std::size_t>();
        m.actions = j.at("actions").get<std::size_t>();
        m.horizon = j.at("horizon").get<std::size_t>();
        const auto& tr = j.at("transitions");
        const auto& rw = j.at("rewards");
        if (tr.size() != m.states || rw.size() != m.states) throw SpecError("MDP tables must have one row per state");
        for (std::size_t s = 0; s < m.states; ++s) {
            if (tr[s].size() != m.actions || rw[s].size() != m.actions)
                throw SpecError("MDP table rows must have one entry per action");
            for (std::size_t a = 0; a < m.actions; ++a) {
                m.next.push_back(tr[s][a].get<std::size_t>());
                m.reward.push_back(rw[s][a].get<double>());
            }
        }
        if (j.contains("initial_states")) {
            m.initial_states = j["initial_states"].get<std::vector<std::size_t>>();
        } else {
            for (std::size_t s = 0; s < m.states; ++s) m.initial_states.push_back(s);
        }
        const std::string adv = j.value("adversary", std::string("round_robin"));
        if (adv == "round_robin")
            m.adversary = Adversary::round_robin;
        else if (adv == "greedy")
            m.adversary = Adversary::greedy;
        else
            throw SpecError("unknown adversary '" + adv + "'");
    } catch (const json::exception& e) {
        throw SpecError(std::string("MDP JSON: ") + e.what());
    }
    m.validate();
    return m;
}

MdpSpec load_mdp_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open MDP file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_mdp_json(ss.str());
}

std::string mdp_to_json(const MdpSpec& m) {
    json tr = json::array();
    json rw = json::array();
    for (std::size_t s = 0; s < m.states; ++s) {
        json trow = json::array();
        json rrow = json::array();
        for (std::size_t a = 0; a < m.actions; ++a) {
            trow.push_back(m.next[m.index(s, a)]);
            rrow.push_back(m.reward[m.index(s, a)]);
        }
        tr.push_back(trow);
        rw.push_back(rrow);
    }
    json j = {{"states", m.states},       {"actions", m.actions},
              {"horizon", m.horizon},     {"transitions", tr},
              {"rewards", rw},            {"initial_states", m.initial_states},
              {"adversary", m.adversary == Adversary::greedy ? "greedy" : "round_robin"}};
    return j.dump(2);
}

MdpEnvironment::MdpEnvironment(MdpSpec mdp, std::vector<StableParams> noise, std::uint64_t seed)
    : mdp_(std::move(mdp)), rng_(derive_seed(seed, 4)) {
    mdp_.validate();
    if (!noise.empty() && noise.size() != 1 && noise.size() != mdp_.actions)
        throw SpecError("MDP noise must list 0, 1 or A laws");
    for (const auto& law : noise) noise_.push_back(law.with_mean(0.0));
    q_ = backward_q(mdp_);
}

std::size_t MdpEnvironment::begin_episode(const std::function<std::size_t(std::size_t)>& agent_action) {
    const auto& init = mdp_.initial_states;
    if (mdp_.adversary == Adversary::round_robin) {
        state_ = init[episode_ % init.size()];
    } else {
        if (!agent_action) throw SpecError("greedy adversary needs the agent's first-stage action");
        double worst = -1.0;
        for (auto s : init) {
            const auto a = agent_action(s);
            if (a >= mdp_.actions) throw DomainError("agent reported an invalid action");
            const auto row = q_[0].row(static_cast<Eigen::Index>(s));
            const double gap = row.maxCoeff() - row(static_cast<Eigen::Index>(a));
            if (gap > worst) {
                worst = gap;
                state_ = s;
            }
        }
    }
    stage_ = 0;
    active_ = true;
    ++episode_;
    return state_;
}

double MdpEnvironment::act(std::size_t action) {
    if (!active_ || done()) throw DomainError("act() outside an active episode");
    if (action >= mdp_.actions) {
        active_ = false;
        std::ostringstream msg;
        msg << "invalid action " << action << " (A = " << mdp_.actions << ")";
        throw DomainError(msg.str());
    }
    const auto idx = mdp_.index(state_, action);
    double r = mdp_.reward[idx];
    if (!noise_.empty()) r += stable::sample_one(noise_.size() == 1 ? noise_[0] : noise_[action], rng_);
    state_ = mdp_.next[idx];
    ++stage_;
    if (done()) active_ = false;
    return r;
}

Episode mdp_episode(MdpEnvironment& env, const MdpPolicy& policy) {
    Episode ep;
    std::size_t s = env.begin_episode([&](std::size_t x) { return policy(0, x); });
    const auto& q = env.true_q();
    const double best = q[0].row(static_cast<Eigen::Index>(s)).maxCoeff();
    for (std::size_t h = 0; h < env.spec().horizon; ++h) {
        const std::size_t a = policy(h, s);
        ep.states.push_back(s);
        ep.actions.push_back(a);
        if (a < env.spec().actions) ep.expected_total += env.mean_reward(s, a);
        const double r = env.act(a);  // throws on an invalid action
        ep.rewards.push_back(r);
        ep.total += r;
        s = env.state();
    }
    ep.regret = best - ep.expected_total;
    return ep;
}

MdpEnvironment make_mdp_env(const EnvSpec& spec, std::uint64_t seed) {
    spec.validate();
    if (spec.kind != EnvKind::adversarial_mdp) throw SpecError("make_mdp_env needs the adversarial_mdp kind");
    return MdpEnvironment(*spec.mdp, spec.noise, seed);
}

}  // namespace sbrl::bandit
