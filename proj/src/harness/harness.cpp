#include "sbrl/harness.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "config.hpp"
#include "sbrl/error.hpp"
#include "sbrl/stable.hpp"

namespace sbrl::harness {

namespace fs = std::filesystem;
using detail::fail;
using detail::Node;
using nlohmann::json;

namespace {

const std::map<std::string, Kind>& kind_names() {
    static const std::map<std::string, Kind> names{{"bandit-regret", Kind::bandit_regret},
                                                   {"bayes-regret", Kind::bayes_regret},
                                                   {"tournament", Kind::tournament},
                                                   {"backtest", Kind::backtest},
                                                   {"execution", Kind::execution},
                                                   {"estimate-stable", Kind::estimate_stable}};
    return names;
}

// Shortest round-trip decimal, so reruns print identical bytes.
std::string num(double x) {
    if (std::isnan(x)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string seeds_text(const std::vector<std::uint64_t>& seeds) {
    std::string s;
    for (auto v : seeds) s += (s.empty() ? "" : ",") + std::to_string(v);
    return s;
}

std::vector<std::uint64_t> seeds_from_json(const json& j) {
    std::vector<std::uint64_t> out;
    if (j.is_array()) {
        for (const auto& v : j) {
            if (!v.is_number_unsigned()) fail("seeds", "entries must be non-negative integers");
            out.push_back(v.get<std::uint64_t>());
        }
    } else if (j.is_object()) {
        Node n(j, "seeds");
        const auto first = n.count("first", 1);
        const auto count = n.count("count");
        n.close();
        for (std::size_t k = 0; k < count; ++k) out.push_back(first + k);
    } else {
        fail("seeds", "must be an array or {\"first\", \"count\"}");
    }
    if (out.empty()) fail("seeds", "must name at least one seed");
    for (std::size_t i = 0; i < out.size(); ++i)
        for (std::size_t k = 0; k < i; ++k)
            if (out[i] == out[k]) fail("seeds", "duplicate seed " + std::to_string(out[i]));
    return out;
}

// Everything the kind-specific runners need, rebuilt from the canonical JSON.
struct Plan {
    std::vector<detail::AgentSpec> bandit_agents;
    bandit::EnvSpec env;
    std::size_t runs = 20;
    rl::TournamentConfig tournament;
    std::vector<std::string> names;
    rl::BacktestConfig backtest;
    detail::MarketSource source;
    std::optional<market::OhlcvSeries> data;
    std::string input;
};

Plan make_plan(const json& doc, Kind kind, const std::string& source_dir) {
    Plan p;
    Node root(doc, "");
    root.count("format_version");
    root.text("kind");
    if (root.has("seeds")) root.raw("seeds");
    switch (kind) {
        case Kind::bandit_regret:
        case Kind::bayes_regret:
            p.env = detail::env_spec(root.child("env"));
            p.bandit_agents = detail::agent_specs(root.raw("agents"), "agents");
            for (std::size_t i = 0; i < p.bandit_agents.size(); ++i) {
                auto& ts = p.bandit_agents[i].ts;
                if (ts.algorithm != "scts" && ts.algorithm != "sacts") continue;
                // Per-user agents default to the environment's user count.
                if (ts.users == 1) ts.users = p.env.users;
                if (ts.users != p.env.users)
                    fail("agents[" + std::to_string(i) + "].users", "must equal env.users");
                if (ts.affinity && static_cast<std::size_t>(ts.affinity->rows()) != ts.users)
                    fail("agents[" + std::to_string(i) + "].affinity", "must be users x users");
            }
            if (kind == Kind::bayes_regret) {
                p.runs = root.count("runs", p.runs);
                if (p.runs < 2) fail("runs", "must be >= 2");
                for (const auto& a : p.bandit_agents)
                    if (a.algorithm == "oracle") fail("agents", "bayes-regret has no oracle (means are redrawn)");
            }
            break;
        case Kind::tournament:
            p.tournament = root.has("tournament") ? detail::tournament_config(root.child("tournament"), source_dir)
                                                  : rl::TournamentConfig{};
            p.names = detail::name_list(root.raw("agents"), "agents", rl::player_names());
            if (p.names.size() < 2) fail("agents", "a tournament needs at least two agents");
            break;
        case Kind::backtest:
        case Kind::execution:
            p.backtest = detail::backtest_config(root, kind == Kind::execution, p.source, source_dir);
            p.names = detail::name_list(root.raw("agents"), "agents", rl::strategy_names());
            if (p.source.data) {
                try {
                    p.data = market::load_ohlcv(*p.source.data);
                } catch (const Error& e) {
                    fail("market.data", e.what());
                }
                if (p.data->stocks() > 6) fail("market.data", "backtests support 1 to 6 stocks");
            }
            break;
        case Kind::estimate_stable: {
            const auto in = root.text("input");
            fs::path f(in);
            p.input = (f.is_absolute() ? f : fs::path(source_dir) / f).string();
            break;
        }
    }
    root.close();
    return p;
}

class Bundle {
public:
    Bundle(fs::path dir, std::string hash) : dir_(std::move(dir)), hash_(std::move(hash)) {}

    void write(const std::string& rel, const std::string& header, const std::string& body) {
        const fs::path p = dir_ / rel;
        fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary);
        if (!out) throw DataError("cannot write " + p.string());
        out << "# config_hash=" << hash_ << ' ' << header << '\n' << body;
        if (!out) throw DataError("write failed for " + p.string());
        files_.push_back(rel);
    }
    void write_json(const std::string& rel, json j) {
        j["config_hash"] = hash_;
        const fs::path p = dir_ / rel;
        fs::create_directories(p.parent_path());
        std::ofstream out(p, std::ios::binary);
        if (!out) throw DataError("cannot write " + p.string());
        out << j.dump(2) << '\n';
        files_.push_back(rel);
    }
    const std::vector<std::string>& files() const { return files_; }

private:
    fs::path dir_;
    std::string hash_;
    std::vector<std::string> files_;
};

void report(const RunOptions& o, const std::string& line) {
    if (o.progress) o.progress(line);
}

std::unique_ptr<bandit::Agent> build_agent(const detail::AgentSpec& a, const bandit::Environment& env,
                                           std::uint64_t seed) {
    if (a.algorithm == "random") return std::make_unique<bandit::RandomAgent>(seed);
    if (a.algorithm == "oracle") return std::make_unique<bandit::OracleAgent>(env);
    return ts::make_agent(a.ts, env.spec().arms, env.spec().dim, seed);
}

// Agent streams share one seed per environment seed so agents are compared
// on identical instances.
std::uint64_t agent_seed(std::uint64_t seed) { return derive_seed(seed, 1); }

void run_bandit_regret(const Experiment& exp, const Plan& p, std::size_t workers, Bundle& out,
                       std::vector<std::string>& failures, const RunOptions& o) {
    const auto& agents = p.bandit_agents;
    const std::size_t S = exp.seeds.size();
    std::vector<std::optional<bandit::RunTrace>> traces(agents.size() * S);
    std::vector<std::optional<bandit::Regret>> regrets(agents.size() * S);
    auto errs = run_cells(traces.size(), workers, [&](std::size_t c) {
        const auto& a = agents[c / S];
        const auto seed = exp.seeds[c % S];
        bandit::Environment env(p.env, seed);
        auto agent = build_agent(a, env, agent_seed(seed));
        auto tr = bandit::run_bandit(env, *agent, 0, false);
        regrets[c] = bandit::regret(tr);
        traces[c] = std::move(tr);
        report(o, "cell " + a.label + " seed " + std::to_string(seed) + " done");
    });
    json summary = {{"kind", "bandit-regret"}, {"seeds", exp.seeds}, {"agents", json::object()}};
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const auto& label = agents[i].label;
        std::vector<const bandit::Regret*> ok;
        json per_seed = json::object();
        for (std::size_t k = 0; k < S; ++k) {
            const std::size_t c = i * S + k;
            const auto seed = exp.seeds[k];
            if (!errs[c].empty()) {
                failures.push_back(label + " seed " + std::to_string(seed) + ": " + errs[c]);
                continue;
            }
            const auto& tr = *traces[c];
            const auto& rg = *regrets[c];
            std::ostringstream os;
            os << "t,arm,reward,chosen_mean,optimal_mean,cumulative_regret\n";
            for (std::size_t t = 0; t < tr.size(); ++t)
                os << t + 1 << ',' << tr.arms[t] << ',' << num(tr.rewards[t]) << ',' << num(tr.chosen_means[t]) << ','
                   << num(tr.optimal_means[t]) << ',' << num(rg.prefix[t]) << '\n';
            out.write("traces/" + label + "_seed" + std::to_string(seed) + ".csv",
                      "seed=" + std::to_string(seed) + " agent=" + label, os.str());
            per_seed[std::to_string(seed)] = rg.total;
            ok.push_back(&rg);
        }
        if (ok.empty()) continue;
        const std::size_t T = ok.front()->prefix.size();
        std::ostringstream os;
        os << "t,mean_regret,std_error\n";
        double final_mean = 0.0, final_se = 0.0;
        for (std::size_t t = 0; t < T; ++t) {
            double m = 0.0, q = 0.0;
            for (auto* r : ok) m += r->prefix[t];
            m /= static_cast<double>(ok.size());
            for (auto* r : ok) q += (r->prefix[t] - m) * (r->prefix[t] - m);
            const double se = ok.size() > 1 ? std::sqrt(q / static_cast<double>(ok.size() - 1) / static_cast<double>(ok.size())) : 0.0;
            os << t + 1 << ',' << num(m) << ',' << num(se) << '\n';
            final_mean = m;
            final_se = se;
        }
        out.write("regret_" + label + ".csv", "seeds=" + seeds_text(exp.seeds) + " agent=" + label, os.str());
        double half = 0.0;
        for (auto* r : ok) half += r->prefix[T / 2 - (T >= 2 ? 1 : 0)];
        half /= static_cast<double>(ok.size());
        summary["agents"][label] = {{"final_regret_mean", final_mean},
                                    {"final_regret_std_error", final_se},
                                    {"half_horizon_regret_mean", half},
                                    {"per_seed", per_seed}};
    }
    summary["failures"] = failures;
    out.write_json("summary.json", summary);
}

void run_bayes_regret(const Experiment& exp, const Plan& p, std::size_t workers, Bundle& out,
                      std::vector<std::string>& failures, const RunOptions& o) {
    const auto& agents = p.bandit_agents;
    const std::size_t S = exp.seeds.size();
    std::vector<std::optional<bandit::BayesRegret>> res(agents.size() * S);
    auto errs = run_cells(res.size(), workers, [&](std::size_t c) {
        const auto& a = agents[c / S];
        const auto seed = exp.seeds[c % S];
        bandit::AgentFactory factory = [&a](const bandit::Environment& env, std::uint64_t s) {
            return build_agent(a, env, s);
        };
        res[c] = bandit::bayes_regret(p.env, factory, p.runs, seed);
        report(o, "cell " + a.label + " seed " + std::to_string(seed) + " done");
    });
    json summary = {{"kind", "bayes-regret"}, {"seeds", exp.seeds}, {"runs", p.runs}, {"agents", json::object()}};
    std::ostringstream table;
    table << "agent,seed,mean,std_error,lower,upper\n";
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const auto& label = agents[i].label;
        json rows = json::array();
        for (std::size_t k = 0; k < S; ++k) {
            const std::size_t c = i * S + k;
            const auto seed = exp.seeds[k];
            if (!errs[c].empty()) {
                failures.push_back(label + " seed " + std::to_string(seed) + ": " + errs[c]);
                continue;
            }
            const auto& b = *res[c];
            std::ostringstream os;
            os << "run,regret\n";
            for (std::size_t r = 0; r < b.per_run.size(); ++r) os << r << ',' << num(b.per_run[r]) << '\n';
            out.write("traces/" + label + "_seed" + std::to_string(seed) + ".csv",
                      "seed=" + std::to_string(seed) + " agent=" + label, os.str());
            table << label << ',' << seed << ',' << num(b.mean) << ',' << num(b.std_error) << ',' << num(b.lower)
                  << ',' << num(b.upper) << '\n';
            rows.push_back({{"seed", seed}, {"mean", b.mean}, {"std_error", b.std_error}, {"lower", b.lower},
                            {"upper", b.upper}});
        }
        summary["agents"][label] = rows;
    }
    out.write("bayes_regret.csv", "seeds=" + seeds_text(exp.seeds), table.str());
    summary["failures"] = failures;
    out.write_json("summary.json", summary);
}

void run_tournament(const Experiment& exp, const Plan& p, std::size_t workers, Bundle& out,
                    std::vector<std::string>& failures, const RunOptions& o) {
    const std::size_t S = exp.seeds.size();
    std::vector<Mat> returns(S);
    auto errs = run_cells(S, workers, [&](std::size_t k) {
        auto cfg = p.tournament;
        cfg.seed = exp.seeds[k];
        returns[k] = rl::tournament(p.names, cfg, 1).returns;
        report(o, "cell tournament seed " + std::to_string(exp.seeds[k]) + " done");
    });
    std::vector<Mat> ok;
    for (std::size_t k = 0; k < S; ++k) {
        const auto seed = exp.seeds[k];
        if (!errs[k].empty()) {
            failures.push_back("tournament seed " + std::to_string(seed) + ": " + errs[k]);
            continue;
        }
        std::ostringstream os;
        os << "round";
        for (const auto& n : p.names) os << ',' << rl::player_label(n);
        os << '\n';
        for (Eigen::Index r = 0; r < returns[k].rows(); ++r) {
            os << r;
            for (Eigen::Index j = 0; j < returns[k].cols(); ++j) os << ',' << num(returns[k](r, j));
            os << '\n';
        }
        out.write("traces/tournament_seed" + std::to_string(seed) + ".csv", "seed=" + std::to_string(seed), os.str());
        ok.push_back(returns[k]);
    }
    json summary = {{"kind", "tournament"}, {"seeds", exp.seeds}, {"agents", p.names}};
    if (!ok.empty()) {
        Eigen::Index rows = 0;
        for (const auto& m : ok) rows += m.rows();
        Mat pooled(rows, ok.front().cols());
        Eigen::Index at = 0;
        for (const auto& m : ok) {
            pooled.middleRows(at, m.rows()) = m;
            at += m.rows();
        }
        const auto res = rl::summarize_tournament(p.names, pooled);
        out.write("table2.txt", "seeds=" + seeds_text(exp.seeds), res.table_text());
        out.write("table2.csv", "seeds=" + seeds_text(exp.seeds), res.table_csv());
        json wins = json::array();
        for (Eigen::Index i = 0; i < res.wins.rows(); ++i) {
            json row = json::array();
            for (Eigen::Index j = 0; j < res.wins.cols(); ++j) row.push_back(res.wins(i, j));
            wins.push_back(row);
        }
        json avg = json::object();
        for (std::size_t i = 0; i < p.names.size(); ++i)
            avg[rl::player_label(p.names[i])] = 100.0 * res.avg_wins(static_cast<Eigen::Index>(i));
        summary["rounds"] = rows;
        summary["wins"] = wins;
        summary["avg_wins_percent"] = avg;
    }
    summary["failures"] = failures;
    out.write_json("summary.json", summary);
}

void run_backtest(const Experiment& exp, const Plan& p, std::size_t workers, Bundle& out,
                  std::vector<std::string>& failures, const RunOptions& o) {
    const bool execution = exp.kind == Kind::execution;
    const double ppy = p.backtest.synth.periods_per_year;
    const std::size_t S = exp.seeds.size();
    const auto& names = p.names;
    std::vector<std::vector<double>> equity(names.size() * S);
    std::vector<std::vector<rl::EpisodeLog>> logs(names.size() * S);
    auto errs = run_cells(equity.size(), workers, [&](std::size_t c) {
        const auto& name = names[c / S];
        const auto seed = exp.seeds[c % S];
        const auto series = p.data ? *p.data : market::synth_market(p.backtest.synth, seed);
        const auto sp = market::split(series, p.backtest.split_ratio);
        equity[c] = rl::backtest_strategy(name, sp.train, sp.test, p.backtest, agent_seed(seed), &logs[c]);
        report(o, "cell " + name + " seed " + std::to_string(seed) + " done");
    });

    std::vector<rl::BacktestRow> rows;
    std::ostringstream metrics_csv;
    metrics_csv << "strategy,seed,annual_return,sharpe,max_drawdown\n";
    json summary = {{"kind", execution ? "execution" : "backtest"},
                    {"seeds", exp.seeds},
                    {"periods_per_year", ppy},
                    {"strategies", json::object()}};
    for (std::size_t i = 0; i < names.size(); ++i) {
        const auto& name = names[i];
        rl::BacktestRow row{name, {}};
        std::vector<const std::vector<double>*> curves;
        for (std::size_t k = 0; k < S; ++k) {
            const std::size_t c = i * S + k;
            const auto seed = exp.seeds[k];
            const auto tag = "seed=" + std::to_string(seed) + " strategy=" + name;
            if (!errs[c].empty()) {
                failures.push_back(name + " seed " + std::to_string(seed) + ": " + errs[c]);
                continue;
            }
            std::ostringstream os;
            os << "bar,equity\n";
            for (std::size_t t = 0; t < equity[c].size(); ++t) os << t << ',' << num(equity[c][t]) << '\n';
            out.write("traces/" + name + "_seed" + std::to_string(seed) + ".csv", tag, os.str());
            if (!logs[c].empty()) {
                std::ostringstream ls;
                ls << "episode,return,loss_critic,loss_actor,j_e,corr_penalty\n";
                for (const auto& e : logs[c])
                    ls << e.episode << ',' << num(e.ret) << ',' << num(e.loss_critic) << ',' << num(e.loss_actor)
                       << ',' << num(e.j_e) << ',' << num(e.corr_penalty) << '\n';
                out.write("traces/" + name + "_seed" + std::to_string(seed) + "_training.csv", tag, ls.str());
            }
            const auto m = market::metrics(equity[c], ppy);
            metrics_csv << name << ',' << seed << ',' << num(m.annual_return) << ','
                        << (m.sharpe ? num(*m.sharpe) : std::string("nan")) << ',' << num(m.max_drawdown) << '\n';
            row.per_seed.push_back(m);
            curves.push_back(&equity[c]);
        }
        if (curves.empty()) continue;
        std::size_t len = curves.front()->size();
        for (auto* cv : curves) len = std::min(len, cv->size());
        std::ostringstream os;
        os << "bar,mean_equity\n";
        for (std::size_t t = 0; t < len; ++t) {
            double m = 0.0;
            for (auto* cv : curves) m += (*cv)[t];
            os << t << ',' << num(m / static_cast<double>(curves.size())) << '\n';
        }
        out.write("equity_" + name + ".csv", "seeds=" + seeds_text(exp.seeds) + " strategy=" + name, os.str());
        summary["strategies"][name] = {{"label", rl::strategy_label(name)},
                                       {"mean_annual_return", row.mean_return()},
                                       {"mean_sharpe", std::isnan(row.mean_sharpe()) ? json(nullptr) : json(row.mean_sharpe())},
                                       {"mean_max_drawdown", row.mean_drawdown()},
                                       {"median_max_drawdown", row.median_drawdown()},
                                       {"seeds_ok", row.per_seed.size()}};
        rows.push_back(std::move(row));
    }
    out.write("metrics.csv", "seeds=" + seeds_text(exp.seeds), metrics_csv.str());
    if (!rows.empty()) {
        out.write("table3.txt", "seeds=" + seeds_text(exp.seeds), rl::table3_text(rows));
        out.write("table3.csv", "seeds=" + seeds_text(exp.seeds), rl::table3_csv(rows));
    }
    summary["failures"] = failures;
    out.write_json("summary.json", summary);
}

void run_estimate(const Plan& p, Bundle& out, std::vector<std::string>& failures) {
    json summary = {{"kind", "estimate-stable"}, {"input", fs::path(p.input).filename().string()}};
    try {
        const auto xs = read_reals(p.input);
        const auto fit = stable::estimate_ecf(xs);
        summary["samples"] = xs.size();
        summary["alpha"] = fit.params.alpha();
        summary["beta"] = fit.params.beta();
        summary["sigma"] = fit.params.sigma();
        summary["delta"] = fit.params.delta();
        summary["degenerate"] = fit.degenerate;
    } catch (const Error& e) {
        failures.push_back(std::string("estimate: ") + e.what());
    }
    summary["failures"] = failures;
    out.write_json("summary.json", summary);
}

}  // namespace

std::string to_string(Kind kind) {
    for (const auto& [name, k] : kind_names())
        if (k == kind) return name;
    return "unknown";
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string config_hash(const Experiment& exp) {
    json j = exp.canonical;
    j["seeds"] = exp.seeds;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    auto number = [&](const std::string& s) {
        std::uint64_t v = 0;
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw ConfigError("bad seed list '" + text + "'");
        return v;
    };
    json arr = json::array();
    if (text.find(',') != std::string::npos) {
        std::istringstream in(text);
        std::string item;
        while (std::getline(in, item, ',')) arr.push_back(number(item));
    } else if (const auto colon = text.find(':'); colon != std::string::npos) {
        const auto a = number(text.substr(0, colon)), b = number(text.substr(colon + 1));
        if (b < a) throw ConfigError("bad seed range '" + text + "'");
        for (auto v = a; v <= b; ++v) arr.push_back(v);
    } else {
        const auto n = number(text);
        if (n == 0) throw ConfigError("seed count must be >= 1");
        for (std::uint64_t v = 1; v <= n; ++v) arr.push_back(v);
    }
    return seeds_from_json(arr);
}

Experiment parse_experiment(const std::string& text, const std::string& source_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    Experiment exp;
    exp.source_dir = source_dir;
    if (!doc.contains("format_version") || !doc["format_version"].is_number_unsigned())
        fail("format_version", "is required and must be an integer");
    if (doc["format_version"].get<int>() != kFormatVersion)
        fail("format_version", "unsupported version (this build reads " + std::to_string(kFormatVersion) + ")");
    if (!doc.contains("kind") || !doc["kind"].is_string()) fail("kind", "is required");
    const auto it = kind_names().find(doc["kind"].get<std::string>());
    if (it == kind_names().end()) fail("kind", "unknown experiment kind '" + doc["kind"].get<std::string>() + "'");
    exp.kind = it->second;

    exp.seeds = doc.contains("seeds") ? seeds_from_json(doc["seeds"]) : std::vector<std::uint64_t>{1};
    if (doc.contains("output")) {
        if (!doc["output"].is_string() || doc["output"].get<std::string>().empty())
            fail("output", "must be a non-empty string");
        exp.output = doc["output"].get<std::string>();
        doc.erase("output");
    } else {
        exp.output = "results/" + to_string(exp.kind);
    }
    if (doc.contains("workers")) {
        if (!doc["workers"].is_number_unsigned() || doc["workers"].get<std::size_t>() == 0)
            fail("workers", "must be a positive integer");
        exp.workers = doc["workers"].get<std::size_t>();
        doc.erase("workers");
    }
    make_plan(doc, exp.kind, source_dir);
    doc.erase("seeds");
    exp.canonical = std::move(doc);
    return exp;
}

Experiment load_experiment(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    const auto dir = fs::path(path).parent_path();
    return parse_experiment(ss.str(), dir.empty() ? "." : dir.string());
}

std::size_t resolve_workers(const Experiment& exp, const RunOptions& opts) {
    if (opts.workers) {
        if (*opts.workers == 0) throw ConfigError("--workers must be >= 1");
        return *opts.workers;
    }
    if (const char* env = std::getenv("SBRL_WORKERS"); env && *env) {
        std::size_t v = 0;
        const std::string s(env);
        const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (res.ec != std::errc() || res.ptr != s.data() + s.size() || v == 0)
            throw ConfigError("SBRL_WORKERS must be a positive integer");
        return v;
    }
    if (exp.workers) return *exp.workers;
    return std::max(1u, std::thread::hardware_concurrency());
}

std::string resolve_output(const Experiment& exp, const RunOptions& opts) {
    if (opts.output) return *opts.output;
    if (const char* env = std::getenv("SBRL_OUT"); env && *env) return env;
    return exp.output;
}

std::vector<std::string> run_cells(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    std::vector<std::string> errors(n);
    std::mutex m;
    std::size_t next = 0;
    auto worker = [&] {
        while (true) {
            std::size_t i;
            {
                std::lock_guard lock(m);
                if (next >= n) return;
                i = next++;
            }
            try {
                fn(i);
            } catch (const std::exception& e) {
                errors[i] = e.what();
                if (errors[i].empty()) errors[i] = "unknown error";
            } catch (...) {
                errors[i] = "unknown error";
            }
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        worker();
        return errors;
    }
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return errors;
}

std::vector<double> read_reals(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path);
    std::vector<double> xs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos || line[b] == '#') continue;
        const auto e = line.find_last_not_of(" \t\r");
        const std::string tok = line.substr(b, e - b + 1);
        double v = 0.0;
        const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
        if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v))
            throw DataError(path + ":" + std::to_string(lineno) + ": not a finite real: '" + tok + "'");
        xs.push_back(v);
    }
    return xs;
}

RunSummary run(Experiment exp, const RunOptions& opts) {
    if (opts.seeds) exp.seeds = *opts.seeds;
    const auto plan = make_plan(exp.canonical, exp.kind, exp.source_dir);
    RunSummary summary;
    summary.hash = config_hash(exp);
    summary.output = resolve_output(exp, opts);
    const std::size_t workers = resolve_workers(exp, opts);

    const fs::path dir(summary.output);
    const fs::path manifest = dir / "manifest.json";
    if (fs::exists(dir) && !fs::is_empty(dir)) {
        std::string previous;
        json old;
        if (fs::exists(manifest)) {
            try {
                std::ifstream in(manifest);
                old = json::parse(in);
                previous = old.value("config_hash", "");
            } catch (const json::exception&) {
                previous.clear();
            }
        }
        if (previous != summary.hash && !opts.force)
            throw ConfigError("output directory " + dir.string() + " holds " +
                              (previous.empty() ? std::string("other files") : "results of config " + previous) +
                              "; pass --force to overwrite");
        // Drop the previous bundle so no stale trace survives.
        if (old.contains("files") && old["files"].is_array())
            for (const auto& f : old["files"])
                if (f.is_string()) fs::remove(dir / f.get<std::string>());
        fs::remove(manifest);
    }
    fs::create_directories(dir);

    Bundle out(dir, summary.hash);
    std::vector<std::string> failures;
    switch (exp.kind) {
        case Kind::bandit_regret:
            summary.cells = plan.bandit_agents.size() * exp.seeds.size();
            run_bandit_regret(exp, plan, workers, out, failures, opts);
            break;
        case Kind::bayes_regret:
            summary.cells = plan.bandit_agents.size() * exp.seeds.size();
            run_bayes_regret(exp, plan, workers, out, failures, opts);
            break;
        case Kind::tournament:
            summary.cells = exp.seeds.size();
            run_tournament(exp, plan, workers, out, failures, opts);
            break;
        case Kind::backtest:
        case Kind::execution:
            summary.cells = plan.names.size() * exp.seeds.size();
            run_backtest(exp, plan, workers, out, failures, opts);
            break;
        case Kind::estimate_stable:
            summary.cells = 1;
            run_estimate(plan, out, failures);
            break;
    }
    summary.failures = failures;
    summary.files = out.files();
    json m = {{"config_hash", summary.hash},
              {"kind", to_string(exp.kind)},
              {"format_version", kFormatVersion},
              {"seeds", exp.seeds},
              {"cells", summary.cells},
              {"failed_cells", failures.size()},
              {"files", summary.files}};
    std::ofstream mo(manifest, std::ios::binary);
    mo << m.dump(2) << '\n';
    if (!mo) throw DataError("cannot write " + manifest.string());
    return summary;
}

}  // namespace sbrl::harness
