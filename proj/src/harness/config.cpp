#include "config.hpp"

#include <algorithm>
#include <filesystem>

#include "sbrl/error.hpp"

namespace sbrl::harness::detail {

namespace {

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

std::filesystem::path resolve(const std::string& file, const std::string& source_dir) {
    std::filesystem::path p(file);
    return p.is_absolute() ? p : std::filesystem::path(source_dir) / p;
}

std::vector<std::size_t> hidden_sizes(Node& n, const std::vector<std::size_t>& fallback) {
    if (!n.has("hidden")) return fallback;
    auto h = n.counts("hidden");
    if (h.empty() || std::find(h.begin(), h.end(), 0u) != h.end())
        fail(join(n.path(), "hidden"), "needs at least one positive layer width");
    return h;
}

rl::DdpgConfig ddpg_config(Node n, rl::DdpgConfig c) {
    c.hidden = hidden_sizes(n, c.hidden);
    c.gamma = n.number("gamma", c.gamma);
    c.tau = n.number("tau", c.tau);
    c.buffer = n.count("buffer", c.buffer);
    c.batch = n.count("batch", c.batch);
    c.actor_lr = n.number("actor_lr", c.actor_lr);
    c.critic_lr = n.number("critic_lr", c.critic_lr);
    c.clip_norm = n.number("clip_norm", c.clip_norm);
    c.reward_scale = n.number("reward_scale", c.reward_scale);
    c.lambda_e = n.number("lambda_e", c.lambda_e);
    c.lambda_c = n.number("lambda_c", c.lambda_c);
    c.ensemble = n.count("ensemble", c.ensemble);
    c.margin = n.number("margin", c.margin);
    c.margin_radius = n.number("margin_radius", c.margin_radius);
    c.margin_candidates = n.count("margin_candidates", c.margin_candidates);
    c.candidate_noise = n.number("candidate_noise", c.candidate_noise);
    c.pretrain_steps = n.count("pretrain_steps", c.pretrain_steps);
    c.divergence_limit = n.number("divergence_limit", c.divergence_limit);
    if (n.has("noise")) {
        Node z = n.child("noise");
        const auto kind = z.text("kind", "gaussian");
        if (kind == "gaussian")
            c.noise.kind = rl::NoiseConfig::Kind::gaussian;
        else if (kind == "ou")
            c.noise.kind = rl::NoiseConfig::Kind::ou;
        else
            fail(join(z.path(), "kind"), "must be gaussian or ou");
        c.noise.start = z.number("start", c.noise.start);
        c.noise.end = z.number("end", c.noise.end);
        c.noise.decay_steps = z.count("decay_steps", c.noise.decay_steps);
        c.noise.ou_theta = z.number("ou_theta", c.noise.ou_theta);
        z.close();
    }
    n.close();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        fail(n.path(), e.what());
    }
    return c;
}

rl::DqnConfig dqn_config(Node n) {
    rl::DqnConfig c;
    c.hidden = hidden_sizes(n, c.hidden);
    c.gamma = n.number("gamma", c.gamma);
    c.lr = n.number("lr", c.lr);
    c.buffer = n.count("buffer", c.buffer);
    c.batch = n.count("batch", c.batch);
    c.epsilon_start = n.number("epsilon_start", c.epsilon_start);
    c.epsilon_end = n.number("epsilon_end", c.epsilon_end);
    c.epsilon_decay_steps = n.count("epsilon_decay_steps", c.epsilon_decay_steps);
    c.tau = n.number("tau", c.tau);
    c.clip_norm = n.number("clip_norm", c.clip_norm);
    c.reward_scale = n.number("reward_scale", c.reward_scale);
    c.divergence_limit = n.number("divergence_limit", c.divergence_limit);
    n.close();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        fail(n.path(), e.what());
    }
    return c;
}

// TsConfig fields shared by the bandit agent specs and the AD-TS block.
void ts_fields(Node& n, ts::TsConfig& c) {
    c.v = n.number("v", c.v);
    c.lambda = n.number("lambda", c.lambda);
    c.users = n.count("users", c.users);
    c.refresh_every = n.count("refresh_every", c.refresh_every);
    c.pi_samples = n.count("pi_samples", c.pi_samples);
    c.mh_step = n.number("mh_step", c.mh_step);
    c.prior_scale = n.number("prior_scale", c.prior_scale);
    if (n.has("warmup")) c.warmup = n.count("warmup");
    if (n.has("fixed_belief")) c.fixed_belief = law(n.raw("fixed_belief"), join(n.path(), "fixed_belief"));
    if (n.has("affinity")) {
        const auto& a = n.raw("affinity");
        const auto path = join(n.path(), "affinity");
        if (!a.is_array() || a.empty()) fail(path, "must be a square array of rows");
        Mat m(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(a.size()));
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (!a[i].is_array() || a[i].size() != a.size()) fail(path, "must be a square array of rows");
            for (std::size_t j = 0; j < a.size(); ++j) {
                if (!a[i][j].is_number()) fail(path, "entries must be numbers");
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a[i][j].get<double>();
            }
        }
        c.affinity = m;
    }
}

}  // namespace

void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path.empty() ? what : "'" + path + "': " + what);
}

Node::Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "must be an object");
}

const json& Node::at(const std::string& key) {
    used_.insert(key);
    if (!j_.contains(key)) fail(join(path_, key), "is required");
    return j_.at(key);
}

double Node::number(const std::string& key, std::optional<double> fallback) {
    used_.insert(key);
    if (!j_.contains(key)) {
        if (!fallback) fail(join(path_, key), "is required");
        return *fallback;
    }
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(join(path_, key), "must be a number");
    return v.get<double>();
}

std::size_t Node::count(const std::string& key, std::optional<std::size_t> fallback) {
    used_.insert(key);
    if (!j_.contains(key)) {
        if (!fallback) fail(join(path_, key), "is required");
        return *fallback;
    }
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned()) fail(join(path_, key), "must be a non-negative integer");
    return v.get<std::size_t>();
}

std::string Node::text(const std::string& key, std::optional<std::string> fallback) {
    used_.insert(key);
    if (!j_.contains(key)) {
        if (!fallback) fail(join(path_, key), "is required");
        return *fallback;
    }
    const auto& v = j_.at(key);
    if (!v.is_string()) fail(join(path_, key), "must be a string");
    return v.get<std::string>();
}

bool Node::flag(const std::string& key, bool fallback) {
    used_.insert(key);
    if (!j_.contains(key)) return fallback;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) fail(join(path_, key), "must be true or false");
    return v.get<bool>();
}

std::vector<std::size_t> Node::counts(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_array()) fail(join(path_, key), "must be an array");
    std::vector<std::size_t> out;
    for (const auto& x : v) {
        if (!x.is_number_unsigned()) fail(join(path_, key), "entries must be non-negative integers");
        out.push_back(x.get<std::size_t>());
    }
    return out;
}

std::vector<double> Node::numbers(const std::string& key) {
    const auto& v = at(key);
    if (!v.is_array()) fail(join(path_, key), "must be an array");
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) fail(join(path_, key), "entries must be numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

const json& Node::raw(const std::string& key) { return at(key); }

Node Node::child(const std::string& key) { return Node(at(key), join(path_, key)); }

void Node::close() const {
    for (const auto& item : j_.items())
        if (!used_.count(item.key())) fail(join(path_, item.key()), "unknown key");
}

stable::StableParams law(const json& j, const std::string& path) {
    Node n(j, path);
    const double alpha = n.number("alpha"), beta = n.number("beta", 0.0), sigma = n.number("sigma", 1.0),
                 delta = n.number("delta", 0.0);
    n.close();
    try {
        return {alpha, beta, sigma, delta};
    } catch (const DomainError& e) {
        fail(path, e.what());
    }
}

std::vector<stable::StableParams> laws(const json& j, const std::string& path) {
    if (!j.is_array()) fail(path, "must be an array of stable laws");
    std::vector<stable::StableParams> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(law(j[i], path + "[" + std::to_string(i) + "]"));
    return out;
}

bandit::EnvSpec env_spec(Node n) {
    bandit::EnvSpec s;
    const auto kind = n.text("kind", "linear");
    try {
        s.kind = bandit::parse_env_kind(kind);
    } catch (const Error&) {
        fail(join(n.path(), "kind"), "must be linear, plain or semiparam");
    }
    if (s.kind == bandit::EnvKind::adversarial_mdp)
        fail(join(n.path(), "kind"), "MDP environments belong to the tournament kind");
    s.arms = n.count("arms", s.arms);
    s.dim = n.count("dim", s.dim);
    s.horizon = n.count("horizon", s.horizon);
    s.users = n.count("users", s.users);
    if (n.has("mu")) {
        const auto mu = n.numbers("mu");
        s.mu = Eigen::Map<const Vec>(mu.data(), static_cast<Eigen::Index>(mu.size()));
    }
    s.noise = n.has("noise") ? laws(n.raw("noise"), join(n.path(), "noise"))
                             : std::vector<stable::StableParams>{{1.8, 0.3, 0.5, 0.0}};
    if (n.has("context_law")) s.context_law = law(n.raw("context_law"), join(n.path(), "context_law"));
    if (n.has("fixed_contexts")) {
        const auto& fc = n.raw("fixed_contexts");
        const auto path = join(n.path(), "fixed_contexts");
        if (!fc.is_array() || fc.empty() || !fc[0].is_array()) fail(path, "must be an array of rows");
        Mat m(static_cast<Eigen::Index>(fc.size()), static_cast<Eigen::Index>(fc[0].size()));
        for (std::size_t i = 0; i < fc.size(); ++i) {
            if (!fc[i].is_array() || fc[i].size() != fc[0].size()) fail(path, "rows must have equal length");
            for (std::size_t j = 0; j < fc[i].size(); ++j) {
                if (!fc[i][j].is_number()) fail(path, "entries must be numbers");
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = fc[i][j].get<double>();
            }
        }
        s.fixed_contexts = m;
    }
    if (n.has("v_process")) {
        Node v = n.child("v_process");
        bandit::VProcessSpec p;
        const auto k = v.text("kind", "reflected_walk");
        if (k == "reflected_walk")
            p.kind = bandit::VProcessSpec::Kind::reflected_walk;
        else if (k == "constant")
            p.kind = bandit::VProcessSpec::Kind::constant;
        else
            fail(join(v.path(), "kind"), "must be reflected_walk or constant");
        p.initial = v.number("initial", p.initial);
        p.step = v.number("step", p.step);
        p.bound = v.number("bound", p.bound);
        v.close();
        s.v_process = p;
    }
    n.close();
    try {
        s.validate();
    } catch (const Error& e) {
        fail(n.path(), e.what());
    }
    return s;
}

std::vector<AgentSpec> agent_specs(const json& j, const std::string& path) {
    if (!j.is_array() || j.empty()) fail(path, "must be a non-empty array");
    std::vector<AgentSpec> out;
    std::set<std::string> labels;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const auto p = path + "[" + std::to_string(i) + "]";
        AgentSpec a;
        if (j[i].is_string()) {
            a.algorithm = j[i].get<std::string>();
            a.label = a.algorithm;
        } else {
            Node n(j[i], p);
            a.algorithm = n.text("algorithm");
            a.label = n.text("label", a.algorithm);
            ts_fields(n, a.ts);
            n.close();
        }
        if (a.algorithm != "random" && a.algorithm != "oracle") {
            if (a.algorithm == "mdp_acts") fail(p, "mdp_acts plays in tournaments (as ac-ts)");
            a.ts.algorithm = a.algorithm;
            try {
                a.ts.validate();
            } catch (const ConfigError& e) {
                fail(p, e.what());
            }
        }
        if (a.label.empty() || a.label.find_first_of("/\\ ,") != std::string::npos)
            fail(p, "label must be non-empty without spaces, commas or slashes");
        if (!labels.insert(a.label).second) fail(p, "duplicate agent label '" + a.label + "'");
        out.push_back(a);
    }
    return out;
}

std::vector<std::string> name_list(const json& j, const std::string& path, const std::vector<std::string>& allowed) {
    if (!j.is_array() || j.empty()) fail(path, "must be a non-empty array of names");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_string()) fail(path, "entries must be strings");
        const auto name = j[i].get<std::string>();
        if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
            fail(path + "[" + std::to_string(i) + "]", "unknown name '" + name + "' (expected one of " + list + ")");
        }
        if (std::find(out.begin(), out.end(), name) != out.end()) fail(path, "duplicate name '" + name + "'");
        out.push_back(name);
    }
    return out;
}

rl::TournamentConfig tournament_config(Node n, const std::string& source_dir) {
    rl::TournamentConfig c;
    c.states = n.count("states", c.states);
    c.actions = n.count("actions", c.actions);
    c.horizon = n.count("horizon", c.horizon);
    const auto adv = n.text("adversary", "round_robin");
    if (adv == "round_robin")
        c.adversary = bandit::Adversary::round_robin;
    else if (adv == "greedy")
        c.adversary = bandit::Adversary::greedy;
    else
        fail(join(n.path(), "adversary"), "must be round_robin or greedy");
    c.rounds = n.count("rounds", c.rounds);
    c.episodes = n.count("episodes", c.episodes);
    if (n.has("noise")) c.noise = laws(n.raw("noise"), join(n.path(), "noise"));
    if (n.has("mdp")) {
        const auto& m = n.raw("mdp");
        try {
            c.mdp = m.is_string() ? bandit::load_mdp_json(resolve(m.get<std::string>(), source_dir).string())
                                  : bandit::parse_mdp_json(m.dump());
        } catch (const Error& e) {
            fail(join(n.path(), "mdp"), e.what());
        }
    }
    n.close();
    try {
        c.validate();
    } catch (const ConfigError& e) {
        fail(n.path(), e.what());
    }
    return c;
}

rl::BacktestConfig backtest_config(Node& root, bool execution, MarketSource& source, const std::string& source_dir) {
    rl::BacktestConfig c;
    if (root.has("market")) {
        Node m = root.child("market");
        if (m.has("data")) source.data = resolve(m.text("data"), source_dir).string();
        c.synth.stocks = m.count("stocks", c.synth.stocks);
        c.synth.days = m.count("days", execution ? 2016 : 504);
        c.synth.drift = m.number("drift", c.synth.drift);
        c.synth.volatility = m.number("volatility", c.synth.volatility);
        c.synth.correlation = m.number("correlation", c.synth.correlation);
        if (m.has("stable_alpha")) c.synth.stable_alpha = m.number("stable_alpha");
        c.synth.max_loss = m.number("max_loss", c.synth.max_loss);
        c.synth.initial_price = m.number("initial_price", c.synth.initial_price);
        c.synth.start_date = m.text("start_date", c.synth.start_date);
        c.market.cost_bps = m.number("cost_bps", c.market.cost_bps);
        c.market.fractional = m.flag("fractional", c.market.fractional);
        c.initial_cash = m.number("initial_cash", c.initial_cash);
        c.split_ratio = m.number("split_ratio", c.split_ratio);
        const double bars = execution ? m.number("bars_per_day", 8.0) : 1.0;
        if (!(bars >= 1.0)) fail(join(m.path(), "bars_per_day"), "must be >= 1");
        c.synth.periods_per_year = 252.0 * bars;
        m.close();
    } else {
        c.synth.days = execution ? 2016 : 504;
        if (execution) c.synth.periods_per_year = 252.0 * 8.0;
    }
    if (root.has("training")) {
        Node t = root.child("training");
        c.train_episodes = t.count("episodes", c.train_episodes);
        c.cppi_floor = t.number("cppi_floor", c.cppi_floor);
        c.cppi_multiplier = t.number("cppi_multiplier", c.cppi_multiplier);
        c.dqn_step = t.number("dqn_step", c.dqn_step);
        c.up_resolution = t.count("up_resolution", c.up_resolution);
        t.close();
    }
    if (root.has("ddpg")) c.ddpg = ddpg_config(root.child("ddpg"), c.ddpg);
    if (root.has("cppi_ddpg")) c.cppi_ddpg = ddpg_config(root.child("cppi_ddpg"), c.cppi_ddpg);
    if (root.has("dqn")) c.dqn = dqn_config(root.child("dqn"));
    if (root.has("ad_ts")) {
        Node a = root.child("ad_ts");
        ts_fields(a, c.ad_ts);
        a.close();
    }
    try {
        c.validate();
        if (!source.data) market::synth_market(c.synth, 0);
    } catch (const Error& e) {
        fail("", e.what());
    }
    return c;
}

}  // namespace sbrl::harness::detail
