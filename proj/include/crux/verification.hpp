#pragma once
// Simulation of candidate designs against per-task testbenches, transcript
// matching, and pass@k estimation.
//
// Transcript convention: a testbench prints one line per monitored cycle; the
// k-th line of a candidate run is compared with the k-th line of the
// reference run under the same testbench.

#include <cstdint>
#include <future>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "crux/util.hpp"

namespace crux::verify {

struct ToolchainConfig {
    std::string name;
    std::string compile_cmd; // placeholders: {design} {tb} {out} {top} {scratch}
    std::string run_cmd;
    std::map<std::string, std::string> env;
    std::vector<std::string> ignore_line_patterns; // ECMAScript regexes, searched per line
    long compile_timeout_ms = 120000;
    bool keep_artifacts = false;
    std::string scratch_root; // empty: system temp dir

    /// Stable digest of everything that affects outcomes (not keep_artifacts/scratch_root).
    std::string fingerprint() const;
};

ToolchainConfig toolchain_from_json(const json& j);
/// Throws Error(IoError) when the file is missing, Error(ParseError) when malformed.
ToolchainConfig load_toolchain(const std::string& path);

/// Throws Error(ToolchainMissing) naming the first unresolvable program.
void check_toolchain(const ToolchainConfig& cfg);

struct SimJob {
    std::string design_source;
    std::string testbench_source;
    std::string top_module = "tb";
    long timeout_ms = 10000;
    // Transcript the run is scored against; when absent the run is its own
    // reference, so a successful run scores 1.0.
    std::optional<std::vector<std::string>> reference_lines;
};

enum class SimStatus { Ok, CompileError, Timeout, Crash, RunFailed };
std::string_view to_string(SimStatus s);

struct SimOutcome {
    bool compile_ok = false;
    bool ran_ok = false;
    SimStatus status = SimStatus::CompileError;
    std::vector<std::string> stdout_lines; // after ignore_line_patterns
    std::string log;                       // compiler / simulator diagnostics, truncated
    std::optional<double> match_fraction;  // present iff ran_ok
    long wall_ms = 0;
    std::string scratch_dir;
};

json to_json(const SimOutcome& o); // wall_ms and scratch_dir are left out

/// Full form including transcript and log, for outcome caches.
json to_cache_json(const SimOutcome& o);
SimOutcome outcome_from_cache_json(const json& j);

/// Throws Error(ToolchainMissing) before running anything when a program is missing,
/// Error(InvalidArgument) when timeout_ms <= 0.
SimOutcome run_sim(const SimJob& job, const ToolchainConfig& toolchain);

/// Trims and collapses internal whitespace runs to one space.
std::string normalize_ws(std::string_view line);

std::vector<std::string> filter_transcript(const std::vector<std::string>& lines,
                                           const std::vector<std::string>& ignore_patterns);

/// Equal positions (after normalize_ws) over max(|reference|, 1).
double match_outputs(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);

/// Unbiased pass@k estimate, 1 - prod_{i=n-c+1}^{n} (1 - k/i).
/// Throws Error(DomainError) unless 0 <= c <= n and 1 <= k <= n.
double pass_at_k(int n, int c, int k);

struct Tally {
    int n = 0;
    int c = 0;
};

struct PassAtKReport {
    std::map<std::string, Tally> per_task;
    std::vector<int> k_values;
    std::map<std::pair<std::string, int>, double> estimates;
    std::map<int, double> aggregate;
    std::vector<std::string> warnings;
};

/// A task with n == 0 scores 0; a task with 0 < n < k scores 1 if c > 0 else 0.
/// Both add a warning. Throws Error(EmptyInput) for an empty map.
PassAtKReport report_from_tallies(const std::map<std::string, Tally>& tallies, const std::vector<int>& k_values);

/// An outcome counts as correct iff ran_ok and match_fraction >= threshold.
PassAtKReport aggregate_report(const std::map<std::string, std::vector<SimOutcome>>& samples,
                               double correctness_threshold, const std::vector<int>& k_values);

std::string report_jsonl(const PassAtKReport& r, const json& meta);
std::string report_text(const PassAtKReport& r);
std::string report_csv(const PassAtKReport& r);

// Cached, parallel verification ------------------------------------------------

struct Testbench {
    std::string task_id;
    std::string reference_code;
    std::string source;
    std::string top_module = "tb";
};

/// Loads `<dir>/<task_id>_tb.v`; the top module is the first module in the file.
Testbench load_testbench(const std::string& dir, const std::string& task_id, const std::string& reference_code);

class Verifier {
public:
    /// `cache_dir`, when set, persists outcomes by job hash across processes.
    Verifier(ToolchainConfig toolchain, std::size_t jobs, long timeout_ms = 10000, std::string cache_dir = "");

    /// Reference run for the bench; throws Error(InvalidArgument) when the reference does not run.
    SimOutcome reference(const Testbench& bench);

    /// Candidate run scored against the reference transcript.
    SimOutcome verify(const Testbench& bench, const std::string& candidate_code);

    /// Runs all (bench, code) pairs on a bounded pool; results keep input order.
    std::vector<SimOutcome> verify_all(const std::vector<std::pair<const Testbench*, std::string>>& work);

    std::size_t simulations_run() const;

    const ToolchainConfig& toolchain() const { return toolchain_; }

private:
    SimOutcome cached(const std::string& key, const SimJob& job);
    SimOutcome run_or_load(const std::string& key, const SimJob& job);

    ToolchainConfig toolchain_;
    std::string fingerprint_;
    std::size_t jobs_;
    long timeout_ms_;
    std::string cache_dir_;
    mutable std::mutex mu_;
    std::map<std::string, std::shared_future<SimOutcome>> cache_;
    std::size_t runs_ = 0;
};

} // namespace crux::verify
