#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace sbrl::harness {

inline constexpr int kFormatVersion = 1;

enum class Kind { bandit_regret, bayes_regret, tournament, backtest, execution, estimate_stable };

std::string to_string(Kind kind);

/// A schema-checked experiment file. `canonical` is the parsed document with
/// the output directory removed; its hash identifies the results.
struct Experiment {
    Kind kind = Kind::bandit_regret;
    nlohmann::json canonical;
    std::vector<std::uint64_t> seeds;
    std::string output;
    std::optional<std::size_t> workers;
    std::string source_dir;  // relative data paths resolve against it
};

/// Parses and validates; every failure is a ConfigError naming the key.
Experiment parse_experiment(const std::string& text, const std::string& source_dir = ".");
Experiment load_experiment(const std::string& path);

/// 64-bit FNV-1a of `canonical.dump()` with the effective seeds, as 16 hex digits.
std::string config_hash(const Experiment& exp);
std::uint64_t fnv1a(const std::string& bytes);

/// "1,2,3" or "5" (seeds 1..5) or "3:7" (seeds 3..7).
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

struct RunOptions {
    std::optional<std::vector<std::uint64_t>> seeds;
    std::optional<std::size_t> workers;
    std::optional<std::string> output;
    bool force = false;
    /// Per-line progress; silent when empty.
    std::function<void(const std::string&)> progress;
};

struct RunSummary {
    std::string hash;
    std::string output;
    std::size_t cells = 0;
    std::vector<std::string> failures;  // "cell: message"
    std::vector<std::string> files;     // relative to output
};

/// Runs every cell and writes the bundle. Throws ConfigError when the output
/// directory holds results of another configuration and `force` is off.
/// Cell failures are reported in the summary, not thrown.
RunSummary run(Experiment exp, const RunOptions& opts);

/// Worker count after the flag, SBRL_WORKERS and the config, in that order.
std::size_t resolve_workers(const Experiment& exp, const RunOptions& opts);
/// Output directory after the flag, SBRL_OUT and the config.
std::string resolve_output(const Experiment& exp, const RunOptions& opts);

/// Runs fn(0..n-1) on up to `workers` threads. Errors are caught per index.
std::vector<std::string> run_cells(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Newline-separated reals; blank lines and '#' comments are skipped.
std::vector<double> read_reals(const std::string& path);

// ---------------------------------------------------------------------------
// Verification suites

struct Criterion {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string measured;
    double seconds = 0.0;
};

/// stable, ecf, posterior, regret, degeneracy, mdp, gradients, ddpg, cppi,
/// accounting, reproducibility, format, all.
const std::vector<std::string>& suite_names();

/// Runs the suite's criteria; unknown names are a ConfigError.
/// `scratch` holds temporary outputs of the reproducibility and format
/// checks (a temp directory when empty).
std::vector<Criterion> verify(const std::string& suite, const std::string& scratch = "",
                              const std::function<void(const Criterion&)>& on_result = {});

/// "criterion 7 gradients PASS max_rel_err=3.1e-07 (0.4 s)".
std::string report_line(const Criterion& c);

}  // namespace sbrl::harness
