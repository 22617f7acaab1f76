#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sbrl/bandit.hpp"
#include "sbrl/linalg.hpp"
#include "sbrl/rng.hpp"

namespace sbrl::rl {

/// Learner that plays whole episodes of an MDP-contextual environment and
/// keeps learning across them.
class EpisodicPlayer {
public:
    virtual ~EpisodicPlayer() = default;
    /// Plays one episode; returns the realised reward sum.
    virtual double play(bandit::MdpEnvironment& env) = 0;
};

/// ql, dqn, sarsa, cb-ts, ac-ts, random, oracle.
const std::vector<std::string>& player_names();
/// Table label: QL, DQL, SARSA, CB-TS, AC-TS, Random, Oracle.
std::string player_label(const std::string& name);
std::unique_ptr<EpisodicPlayer> make_player(const std::string& name, const bandit::MdpSpec& mdp,
                                            std::size_t episodes, std::uint64_t seed);

/// Transitions uniform over states, mean rewards U(0, 1), every state a
/// possible episode start.
bandit::MdpSpec random_mdp(std::size_t states, std::size_t actions, std::size_t horizon,
                           bandit::Adversary adversary, Rng& rng);

struct TournamentConfig {
    std::size_t states = 4;
    std::size_t actions = 3;
    std::size_t horizon = 3;
    bandit::Adversary adversary = bandit::Adversary::round_robin;
    std::optional<bandit::MdpSpec> mdp;  // replaces the per-round random MDP
    std::vector<stable::StableParams> noise{{1.5, 0.0, 0.1, 0.0}};
    std::size_t rounds = 100;
    std::size_t episodes = 200;  // per agent per round
    std::uint64_t seed = 1;

    void validate() const;
};

struct TournamentResult {
    std::vector<std::string> agents;
    Mat returns;   // rounds x agents
    Mat wins;      // share of rounds where row out-earned column, ties count half
    Vec avg_wins;  // mean of each row off the diagonal

    /// Rows and columns by label, cells "62:38", a final "avg wins(%)" row.
    std::string table_text() const;
    std::string table_csv() const;
};

/// Every agent plays the same environment with the same seed in a round.
/// Rounds run on up to `workers` threads; results do not depend on it.
TournamentResult tournament(const std::vector<std::string>& agents, const TournamentConfig& cfg,
                            std::size_t workers = 1);

/// Win shares and averages from a rounds x agents matrix of returns.
TournamentResult summarize_tournament(const std::vector<std::string>& agents, Mat returns);

/// Round r alone: the environment and the per-agent seed are derived from
/// (cfg.seed, r). Returns each agent's summed return.
Vec tournament_round(const std::vector<std::string>& agents, const TournamentConfig& cfg, std::size_t round);

}  // namespace sbrl::rl
