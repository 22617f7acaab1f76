#pragma once

// Strict readers from experiment JSON into the library's config structs.
// Every accessor marks its key; close() rejects whatever was not read.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "sbrl/backtest.hpp"
#include "sbrl/bandit.hpp"
#include "sbrl/tournament.hpp"
#include "sbrl/ts.hpp"

namespace sbrl::harness::detail {

using nlohmann::json;

class Node {
public:
    Node(const json& j, std::string path);

    const std::string& path() const { return path_; }
    bool has(const std::string& key) const { return j_.contains(key); }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt);
    std::size_t count(const std::string& key, std::optional<std::size_t> fallback = std::nullopt);
    std::string text(const std::string& key, std::optional<std::string> fallback = std::nullopt);
    bool flag(const std::string& key, bool fallback);
    std::vector<std::size_t> counts(const std::string& key);
    std::vector<double> numbers(const std::string& key);

    /// The raw value (marked as read); throws when missing.
    const json& raw(const std::string& key);
    Node child(const std::string& key);

    /// ConfigError listing the first key nobody read.
    void close() const;

private:
    const json& at(const std::string& key);
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

[[noreturn]] void fail(const std::string& path, const std::string& what);

stable::StableParams law(const json& j, const std::string& path);
std::vector<stable::StableParams> laws(const json& j, const std::string& path);

bandit::EnvSpec env_spec(Node node);

struct AgentSpec {
    std::string label;
    std::string algorithm;  // a ts algorithm, random or oracle
    ts::TsConfig ts;
};
std::vector<AgentSpec> agent_specs(const json& j, const std::string& path);

rl::TournamentConfig tournament_config(Node node, const std::string& source_dir);
std::vector<std::string> name_list(const json& j, const std::string& path, const std::vector<std::string>& allowed);

struct MarketSource {
    std::optional<std::string> data;  // OHLCV CSV path; synthetic when absent
};
/// `execution` adds bars_per_day and scales the annualisation.
rl::BacktestConfig backtest_config(Node& root, bool execution, MarketSource& source, const std::string& source_dir);

}  // namespace sbrl::harness::detail
