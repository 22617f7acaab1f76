#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "sbrl/bandit.hpp"
#include "sbrl/error.hpp"

namespace sbrl::bandit {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) {
        if (!field.empty() && field.back() == '\r') field.pop_back();
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_number(const std::string& s, std::size_t row, const char* column) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size() || !std::isfinite(v)) {
        std::ostringstream msg;
        msg << "row " << row << ": bad " << column << " value '" << s << "'";
        throw DataError(msg.str());
    }
    return v;
}

}  // namespace

Vec RecommendationData::context(std::size_t user, std::size_t item) const {
    Vec x = Vec::Zero(static_cast<Eigen::Index>(context_dim()));
    x(static_cast<Eigen::Index>(user)) = 1.0;
    x.tail(item_features.cols()) = item_features.row(static_cast<Eigen::Index>(item)).transpose();
    return x;
}

RecommendationData load_recommendation_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    const auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "user_id" || header[1] != "item_id" || header[2] != "reward")
        throw DataError(path + ": header must start with user_id,item_id,reward");
    const std::size_t d = header.size() - 3;

    RecommendationData data;
    std::map<std::string, std::size_t> users, items;
    std::vector<std::vector<double>> features;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv(line);
        if (f.size() != header.size()) {
            std::ostringstream msg;
            msg << path << " row " << row << ": expected " << header.size() << " fields, got " << f.size();
            throw DataError(msg.str());
        }
        auto [uit, unew] = users.try_emplace(f[0], data.user_ids.size());
        if (unew) data.user_ids.push_back(f[0]);
        auto [iit, inew] = items.try_emplace(f[1], data.item_ids.size());
        std::vector<double> feat(d);
        for (std::size_t k = 0; k < d; ++k) feat[k] = parse_number(f[3 + k], row, "feature");
        if (inew) {
            data.item_ids.push_back(f[1]);
            features.push_back(feat);
        } else if (features[iit->second] != feat) {
            std::ostringstream msg;
            msg << path << " row " << row << ": item '" << f[1] << "' has inconsistent features";
            throw DataError(msg.str());
        }
        const double r = parse_number(f[2], row, "reward");
        data.events.push_back({uit->second, iit->second, r > 0.0 ? 1.0 : 0.0});
    }
    if (data.events.empty()) throw DataError(path + ": no events");
    data.item_features.resize(static_cast<Eigen::Index>(data.item_ids.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < features.size(); ++i)
        for (std::size_t k = 0; k < d; ++k)
            data.item_features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = features[i][k];
    return data;
}

ReplayResult replay_evaluate(const RecommendationData& data, Agent& agent) {
    ReplayResult out;
    const auto n_items = static_cast<Eigen::Index>(data.item_ids.size());
    RoundContext ctx;
    ctx.contexts.resize(n_items, static_cast<Eigen::Index>(data.context_dim()));
    for (const auto& ev : data.events) {
        for (Eigen::Index i = 0; i < n_items; ++i)
            ctx.contexts.row(i) = data.context(ev.user, static_cast<std::size_t>(i)).transpose();
        ctx.user = ev.user;
        ctx.t = out.events++;
        if (agent.choose(ctx) == ev.item) {
            agent.observe(ev.reward);
            ++out.matched;
            out.total_reward += ev.reward;
        }
    }
    return out;
}

}  // namespace sbrl::bandit
