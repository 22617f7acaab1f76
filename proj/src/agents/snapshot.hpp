#pragma once

#include <sstream>
#include <string>

#include <json.hpp>

#include "sbrl/error.hpp"
#include "sbrl/ts.hpp"

namespace sbrl::ts::detail {

inline constexpr int kSnapshotVersion = 1;

inline std::string rng_state(const Rng& rng) {
    std::ostringstream out;
    out << rng;
    return out.str();
}

inline Rng rng_from_state(const std::string& s) {
    Rng rng;
    std::istringstream in(s);
    in >> rng;
    if (!in) throw ConfigError("snapshot: corrupt generator state");
    return rng;
}

inline nlohmann::json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec vec_from_json(const nlohmann::json& j) {
    const auto xs = j.get<std::vector<double>>();
    return Eigen::Map<const Vec>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

inline nlohmann::json belief_json(const ShapeBelief& b) { return {b.alpha(), b.beta(), b.sigma()}; }

inline ShapeBelief belief_from_json(const nlohmann::json& j) {
    return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

inline nlohmann::json arm_json(const ArmState& a) {
    nlohmann::json ctx = nlohmann::json::array();
    for (const auto& c : a.contexts) ctx.push_back(vec_json(c));
    return {{"belief", belief_json(a.belief)}, {"prior_var", a.prior_var}, {"eta", vec_json(a.eta)},
            {"contexts", ctx},                 {"rewards", a.rewards},     {"users", a.users},
            {"since_refresh", a.since_refresh}};
}

inline ArmState arm_from_json(const nlohmann::json& j) {
    ArmState a;
    a.belief = belief_from_json(j.at("belief"));
    a.prior_var = j.at("prior_var").get<double>();
    a.eta = vec_from_json(j.at("eta"));
    for (const auto& c : j.at("contexts")) a.contexts.push_back(vec_from_json(c));
    a.rewards = j.at("rewards").get<std::vector<double>>();
    a.users = j.at("users").get<std::vector<std::size_t>>();
    a.since_refresh = j.at("since_refresh").get<std::size_t>();
    return a;
}

inline void check_header(const nlohmann::json& j, const std::string& algorithm) {
    if (j.value("format", std::string()) != "sbrl-agent") throw ConfigError("snapshot: not an agent snapshot");
    if (j.value("version", 0) != kSnapshotVersion) throw ConfigError("snapshot: unsupported version");
    if (j.value("algorithm", std::string()) != algorithm)
        throw ConfigError("snapshot: expected algorithm " + algorithm);
}

inline nlohmann::json header(const std::string& algorithm) {
    return {{"format", "sbrl-agent"}, {"version", kSnapshotVersion}, {"algorithm", algorithm}};
}

}  // namespace sbrl::ts::detail
