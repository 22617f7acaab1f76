// sbrl: command-line front end over the C API.
//
// Exit codes: 0 success, 1 runtime failure (failed cells or criteria),
// 2 usage or configuration error.

#include <cstdio>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sbrl/sbrl.h"

namespace {

int report(sbrl_status s) {
    std::fprintf(stderr, "sbrl: %s: %s\n", sbrl_status_name(s), sbrl_last_error());
    return s == SBRL_ERR_CONFIG || s == SBRL_ERR_NULL_ARGUMENT ? 2 : 1;
}

void print_line(const char* line, void* quiet) {
    if (!*static_cast<bool*>(quiet)) std::fprintf(stderr, "%s\n", line);
}

void print_result(const char* line, void*) {
    std::printf("%s\n", line);
    std::fflush(stdout);
}

int cmd_run(const std::string& config, const std::string& seeds, std::size_t workers, const std::string& out,
            bool force, bool quiet) {
    sbrl_experiment* exp = nullptr;
    if (auto s = sbrl_experiment_load(config.c_str(), &exp); s != SBRL_OK) return report(s);
    sbrl_run_options opts{};
    opts.seeds = seeds.empty() ? nullptr : seeds.c_str();
    opts.workers = workers;
    opts.output = out.empty() ? nullptr : out.c_str();
    opts.force = force ? 1 : 0;
    opts.progress = print_line;
    opts.user = &quiet;
    char* summary = nullptr;
    const auto s = sbrl_run(exp, &opts, &summary);
    sbrl_experiment_free(exp);
    if (s != SBRL_OK) return report(s);
    const auto j = nlohmann::json::parse(summary);
    sbrl_free_string(summary);
    const auto& failures = j["failures"];
    std::printf("config_hash=%s output=%s cells=%zu failed=%zu files=%zu\n", j["config_hash"].get<std::string>().c_str(),
                j["output"].get<std::string>().c_str(), j["cells"].get<std::size_t>(), failures.size(),
                j["files"].size());
    for (const auto& f : failures) std::fprintf(stderr, "failed cell: %s\n", f.get<std::string>().c_str());
    return failures.empty() ? 0 : 1;
}

int cmd_verify(const std::string& suite, const std::string& scratch) {
    int failed = 0;
    const auto s = sbrl_verify(suite.c_str(), scratch.empty() ? nullptr : scratch.c_str(), print_result, nullptr, &failed);
    if (s != SBRL_OK) return report(s);
    return failed == 0 ? 0 : 1;
}

int cmd_estimate(const std::string& file) {
    double p[4];
    int degenerate = 0;
    if (auto s = sbrl_estimate_stable_file(file.c_str(), p, &degenerate); s != SBRL_OK) return report(s);
    const nlohmann::json j = {{"alpha", p[0]}, {"beta", p[1]}, {"sigma", p[2]}, {"delta", p[3]},
                              {"degenerate", degenerate != 0}};
    std::printf("%s\n", j.dump(2).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stable-noise Thompson sampling and trading RL experiments"};
    app.set_version_flag("--version", std::string(sbrl_version()));
    app.require_subcommand(1);

    std::string config, seeds, out, suite, scratch, file;
    std::size_t workers = 0;
    bool force = false, quiet = false;

    auto* run = app.add_subcommand("run", "Run an experiment config and write its result bundle");
    run->add_option("config", config, "Experiment JSON file")->required()->check(CLI::ExistingFile);
    run->add_option("--seeds", seeds, "Seed list: 1,2,3 or N (1..N) or A:B");
    run->add_option("--workers", workers, "Parallel cells (default: SBRL_WORKERS, config, core count)")
        ->check(CLI::PositiveNumber);
    run->add_option("--out", out, "Output directory (default: SBRL_OUT, then the config)");
    run->add_flag("--force", force, "Overwrite results of a different config");
    run->add_flag("-q,--quiet", quiet, "No per-cell progress");

    auto* verify = app.add_subcommand("verify", "Run acceptance criteria (a criterion name or all)");
    verify->add_option("suite", suite, "stable, ecf, posterior, regret, degeneracy, mdp, gradients, ddpg, cppi, "
                                       "accounting, reproducibility, format or all")
        ->required();
    verify->add_option("--scratch", scratch, "Directory for temporary bundles");

    auto* estimate = app.add_subcommand("estimate-stable", "Fit (alpha, beta, sigma, delta) to newline-separated reals");
    estimate->add_option("file", file, "Input file")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }
    if (*run) return cmd_run(config, seeds, workers, out, force, quiet);
    if (*verify) return cmd_verify(suite, scratch);
    return cmd_estimate(file);
}
