#include "sbrl/sbrl.h"

#include <cstring>
#include <string>

#include "../harness/config.hpp"
#include "sbrl/error.hpp"
#include "sbrl/harness.hpp"
#include "sbrl/stable.hpp"

struct sbrl_experiment {
    sbrl::harness::Experiment exp;
};

struct sbrl_stable {
    sbrl::stable::StableParams law;
};

struct sbrl_bandit_env {
    sbrl::bandit::Environment env;
};

struct sbrl_bandit_agent {
    std::unique_ptr<sbrl::bandit::Agent> agent;
};

namespace {

thread_local std::string last_error;

sbrl_status fail(sbrl_status s, const std::string& msg) {
    last_error = msg;
    return s;
}

// Maps the library's exception hierarchy onto status codes.
template <class F>
sbrl_status guarded(F&& f) {
    try {
        f();
        last_error.clear();
        return SBRL_OK;
    } catch (const sbrl::ConfigError& e) {
        return fail(SBRL_ERR_CONFIG, e.what());
    } catch (const sbrl::InsufficientDataError& e) {
        return fail(SBRL_ERR_INSUFFICIENT_DATA, e.what());
    } catch (const sbrl::DomainError& e) {
        return fail(SBRL_ERR_DOMAIN, e.what());
    } catch (const sbrl::TrainingDiverged& e) {
        return fail(SBRL_ERR_DIVERGED, e.what());
    } catch (const sbrl::NumericError& e) {
        return fail(SBRL_ERR_NUMERIC, e.what());
    } catch (const sbrl::DataError& e) {
        return fail(SBRL_ERR_DATA, e.what());
    } catch (const sbrl::SpecError& e) {
        return fail(SBRL_ERR_SPEC, e.what());
    } catch (const std::exception& e) {
        return fail(SBRL_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(SBRL_ERR_INTERNAL, "unknown error");
    }
}

char* dup(const std::string& s) {
    char* p = static_cast<char*>(std::malloc(s.size() + 1));
    if (!p) throw std::bad_alloc();
    std::memcpy(p, s.c_str(), s.size() + 1);
    return p;
}

sbrl_status null_arg(const char* name) { return fail(SBRL_ERR_NULL_ARGUMENT, std::string(name) + " is NULL"); }

void put_fit(const sbrl::stable::StableFit& fit, double params[4], int* degenerate) {
    params[0] = fit.params.alpha();
    params[1] = fit.params.beta();
    params[2] = fit.params.sigma();
    params[3] = fit.params.delta();
    if (degenerate) *degenerate = fit.degenerate ? 1 : 0;
}

}  // namespace

extern "C" {

const char* sbrl_version(void) { return "0.1.0"; }

const char* sbrl_last_error(void) { return last_error.c_str(); }

const char* sbrl_status_name(sbrl_status status) {
    switch (status) {
        case SBRL_OK: return "ok";
        case SBRL_ERR_CONFIG: return "config error";
        case SBRL_ERR_DOMAIN: return "domain error";
        case SBRL_ERR_NUMERIC: return "numeric error";
        case SBRL_ERR_INSUFFICIENT_DATA: return "insufficient data";
        case SBRL_ERR_DATA: return "data error";
        case SBRL_ERR_SPEC: return "spec error";
        case SBRL_ERR_DIVERGED: return "training diverged";
        case SBRL_ERR_NULL_ARGUMENT: return "null argument";
        case SBRL_ERR_INTERNAL: return "internal error";
    }
    return "unknown status";
}

void sbrl_free_string(char* s) { std::free(s); }

sbrl_status sbrl_experiment_load(const char* path, sbrl_experiment** out) {
    if (!path) return null_arg("path");
    if (!out) return null_arg("out");
    return guarded([&] { *out = new sbrl_experiment{sbrl::harness::load_experiment(path)}; });
}

sbrl_status sbrl_experiment_parse(const char* json, const char* source_dir, sbrl_experiment** out) {
    if (!json) return null_arg("json");
    if (!out) return null_arg("out");
    return guarded([&] {
        *out = new sbrl_experiment{sbrl::harness::parse_experiment(json, source_dir ? source_dir : ".")};
    });
}

void sbrl_experiment_free(sbrl_experiment* exp) { delete exp; }

sbrl_status sbrl_experiment_kind(const sbrl_experiment* exp, char** out) {
    if (!exp) return null_arg("exp");
    if (!out) return null_arg("out");
    return guarded([&] { *out = dup(sbrl::harness::to_string(exp->exp.kind)); });
}

sbrl_status sbrl_experiment_hash(const sbrl_experiment* exp, char** out) {
    if (!exp) return null_arg("exp");
    if (!out) return null_arg("out");
    return guarded([&] { *out = dup(sbrl::harness::config_hash(exp->exp)); });
}

sbrl_status sbrl_run(const sbrl_experiment* exp, const sbrl_run_options* opts, char** summary_json) {
    if (!exp) return null_arg("exp");
    return guarded([&] {
        sbrl::harness::RunOptions o;
        if (opts) {
            if (opts->seeds) o.seeds = sbrl::harness::parse_seed_list(opts->seeds);
            if (opts->workers) o.workers = opts->workers;
            if (opts->output) o.output = opts->output;
            o.force = opts->force != 0;
            if (opts->progress) {
                auto cb = opts->progress;
                void* user = opts->user;
                o.progress = [cb, user](const std::string& line) { cb(line.c_str(), user); };
            }
        }
        const auto s = sbrl::harness::run(exp->exp, o);
        if (summary_json) {
            const nlohmann::json j = {{"config_hash", s.hash},
                                      {"output", s.output},
                                      {"cells", s.cells},
                                      {"failures", s.failures},
                                      {"files", s.files}};
            *summary_json = dup(j.dump());
        }
    });
}

sbrl_status sbrl_verify(const char* suite, const char* scratch_dir, sbrl_line_callback on_line, void* user,
                        int* failed) {
    if (!suite) return null_arg("suite");
    return guarded([&] {
        int bad = 0;
        sbrl::harness::verify(suite, scratch_dir ? scratch_dir : "", [&](const sbrl::harness::Criterion& c) {
            bad += c.pass ? 0 : 1;
            if (on_line) on_line(sbrl::harness::report_line(c).c_str(), user);
        });
        if (failed) *failed = bad;
    });
}

sbrl_status sbrl_stable_create(double alpha, double beta, double sigma, double delta, sbrl_stable** out) {
    if (!out) return null_arg("out");
    return guarded([&] { *out = new sbrl_stable{sbrl::stable::StableParams(alpha, beta, sigma, delta)}; });
}

void sbrl_stable_free(sbrl_stable* law) { delete law; }

sbrl_status sbrl_stable_pdf(const sbrl_stable* law, double x, double* out) {
    if (!law) return null_arg("law");
    if (!out) return null_arg("out");
    return guarded([&] { *out = sbrl::stable::pdf(law->law, x); });
}

sbrl_status sbrl_stable_cdf(const sbrl_stable* law, double x, double* out) {
    if (!law) return null_arg("law");
    if (!out) return null_arg("out");
    return guarded([&] { *out = sbrl::stable::cdf(law->law, x); });
}

sbrl_status sbrl_stable_char_fn(const sbrl_stable* law, double u, double* re, double* im) {
    if (!law) return null_arg("law");
    if (!re || !im) return null_arg("re/im");
    return guarded([&] {
        const auto v = sbrl::stable::char_fn(law->law, u);
        *re = v.real();
        *im = v.imag();
    });
}

sbrl_status sbrl_stable_sample(const sbrl_stable* law, uint64_t seed, size_t n, double* out) {
    if (!law) return null_arg("law");
    if (!out && n > 0) return null_arg("out");
    return guarded([&] {
        sbrl::Rng rng(seed);
        const auto xs = sbrl::stable::sample(law->law, n, rng);
        std::copy(xs.begin(), xs.end(), out);
    });
}

sbrl_status sbrl_estimate_stable(const double* samples, size_t n, double params[4], int* degenerate) {
    if (!samples && n > 0) return null_arg("samples");
    if (!params) return null_arg("params");
    return guarded([&] { put_fit(sbrl::stable::estimate_ecf(std::span<const double>(samples, n)), params, degenerate); });
}

sbrl_status sbrl_estimate_stable_file(const char* path, double params[4], int* degenerate) {
    if (!path) return null_arg("path");
    if (!params) return null_arg("params");
    return guarded([&] { put_fit(sbrl::stable::estimate_ecf(sbrl::harness::read_reals(path)), params, degenerate); });
}

sbrl_status sbrl_bandit_env_create(const char* env_json, uint64_t seed, sbrl_bandit_env** out) {
    if (!env_json) return null_arg("env_json");
    if (!out) return null_arg("out");
    return guarded([&] {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(env_json);
        } catch (const nlohmann::json::parse_error& e) {
            throw sbrl::ConfigError(std::string("env is not valid JSON: ") + e.what());
        }
        const auto spec = sbrl::harness::detail::env_spec(sbrl::harness::detail::Node(j, "env"));
        *out = new sbrl_bandit_env{sbrl::bandit::Environment(spec, seed)};
    });
}

void sbrl_bandit_env_free(sbrl_bandit_env* env) { delete env; }

sbrl_status sbrl_bandit_env_dims(const sbrl_bandit_env* env, size_t* arms, size_t* dim, size_t* horizon) {
    if (!env) return null_arg("env");
    const auto& s = env->env.spec();
    if (arms) *arms = s.arms;
    if (dim) *dim = s.dim;
    if (horizon) *horizon = s.horizon;
    last_error.clear();
    return SBRL_OK;
}

sbrl_status sbrl_bandit_agent_create(const char* agent_json, const sbrl_bandit_env* env, uint64_t seed,
                                     sbrl_bandit_agent** out) {
    if (!agent_json) return null_arg("agent_json");
    if (!env) return null_arg("env");
    if (!out) return null_arg("out");
    return guarded([&] {
        // A bare algorithm name is accepted as well as JSON.
        auto j = nlohmann::json::parse(agent_json, nullptr, false);
        if (j.is_discarded()) j = std::string(agent_json);
        const auto a = sbrl::harness::detail::agent_specs(nlohmann::json::array({j}), "agent").front();
        const auto& s = env->env.spec();
        std::unique_ptr<sbrl::bandit::Agent> agent;
        if (a.algorithm == "random")
            agent = std::make_unique<sbrl::bandit::RandomAgent>(seed);
        else if (a.algorithm == "oracle")
            agent = std::make_unique<sbrl::bandit::OracleAgent>(env->env);
        else
            agent = sbrl::ts::make_agent(a.ts, s.arms, s.dim, seed);
        *out = new sbrl_bandit_agent{std::move(agent)};
    });
}

void sbrl_bandit_agent_free(sbrl_bandit_agent* agent) { delete agent; }

sbrl_status sbrl_bandit_step(sbrl_bandit_env* env, sbrl_bandit_agent* agent, size_t* arm, double* reward,
                             double* regret) {
    if (!env) return null_arg("env");
    if (!agent) return null_arg("agent");
    return guarded([&] {
        const auto& ctx = env->env.next_round();
        const std::size_t a = agent->agent->choose(ctx);
        if (a >= ctx.arms()) throw sbrl::DomainError("agent chose arm " + std::to_string(a));
        const double r = env->env.pull(a);
        agent->agent->observe(r);
        if (arm) *arm = a;
        if (reward) *reward = r;
        if (regret) *regret = env->env.optimal_mean() - env->env.mean_reward(a);
    });
}

}  // extern "C"
