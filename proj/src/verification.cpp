#include "crux/verification.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include <unistd.h>

#include "crux/error.hpp"
#include "crux/process.hpp"
#include "crux/verilog_interface.hpp"

namespace crux::verify {

namespace fs = std::filesystem;
using namespace std::string_literals;

std::string ToolchainConfig::fingerprint() const {
    json j = {{"compile_cmd", compile_cmd},
              {"run_cmd", run_cmd},
              {"env", env},
              {"ignore", ignore_line_patterns},
              {"compile_timeout_ms", compile_timeout_ms}};
    return sha256_hex(j.dump());
}

ToolchainConfig toolchain_from_json(const json& j) {
    ToolchainConfig c;
    try {
        c.name = j.value("name", "");
        c.compile_cmd = j.at("compile_cmd").get<std::string>();
        c.run_cmd = j.at("run_cmd").get<std::string>();
        if (j.contains("env")) c.env = j.at("env").get<std::map<std::string, std::string>>();
        if (j.contains("ignore_line_patterns"))
            c.ignore_line_patterns = j.at("ignore_line_patterns").get<std::vector<std::string>>();
        c.compile_timeout_ms = j.value("compile_timeout_ms", c.compile_timeout_ms);
        c.keep_artifacts = j.value("keep_artifacts", false);
        c.scratch_root = j.value("scratch_root", "");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("toolchain config: ") + e.what());
    }
    if (c.compile_timeout_ms <= 0) throw Error(ErrorCode::ParseError, "compile_timeout_ms must be positive");
    for (const auto& p : c.ignore_line_patterns) {
        try {
            std::regex re(p);
        } catch (const std::regex_error&) {
            throw Error(ErrorCode::ParseError, fmt::format("bad ignore pattern '{}'", p));
        }
    }
    return c;
}

ToolchainConfig load_toolchain(const std::string& path) {
    if (!fs::exists(path)) throw Error(ErrorCode::IoError, fmt::format("toolchain config not found: {}", path));
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("{}: {}", path, e.what()));
    }
    return toolchain_from_json(j);
}

namespace {

std::string first_word(const std::string& cmd) {
    auto b = cmd.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    auto e = cmd.find_first_of(" \t", b);
    return cmd.substr(b, e == std::string::npos ? std::string::npos : e - b);
}

} // namespace

void check_toolchain(const ToolchainConfig& cfg) {
    auto it = cfg.env.find("PATH");
    const std::string path = it == cfg.env.end() ? "" : it->second;
    for (const auto* cmd : {&cfg.compile_cmd, &cfg.run_cmd}) {
        auto prog = first_word(*cmd);
        if (prog.empty())
            throw Error(ErrorCode::ToolchainMissing, fmt::format("toolchain '{}' has an empty command", cfg.name));
        if (prog.find('{') != std::string::npos) continue; // built by the compile step
        if (!proc::resolvable(prog, path))
            throw Error(ErrorCode::ToolchainMissing,
                        fmt::format("toolchain '{}': program '{}' not found", cfg.name, prog));
    }
}

std::string_view to_string(SimStatus s) {
    switch (s) {
    case SimStatus::Ok: return "ok";
    case SimStatus::CompileError: return "compile_error";
    case SimStatus::Timeout: return "timeout";
    case SimStatus::Crash: return "crash";
    case SimStatus::RunFailed: return "run_failed";
    }
    return "";
}

json to_json(const SimOutcome& o) {
    json j = {{"compile_ok", o.compile_ok},
              {"ran_ok", o.ran_ok},
              {"status", to_string(o.status)},
              {"lines", o.stdout_lines.size()}};
    j["match_fraction"] = o.match_fraction ? json(*o.match_fraction) : json(nullptr);
    return j;
}

json to_cache_json(const SimOutcome& o) {
    json j = to_json(o);
    j["stdout_lines"] = o.stdout_lines;
    j["log"] = o.log;
    return j;
}

SimOutcome outcome_from_cache_json(const json& j) {
    SimOutcome o;
    try {
        o.compile_ok = j.at("compile_ok").get<bool>();
        o.ran_ok = j.at("ran_ok").get<bool>();
        const auto st = j.at("status").get<std::string>();
        for (auto s : {SimStatus::Ok, SimStatus::CompileError, SimStatus::Timeout, SimStatus::Crash, SimStatus::RunFailed})
            if (to_string(s) == st) o.status = s;
        o.stdout_lines = j.at("stdout_lines").get<std::vector<std::string>>();
        o.log = j.value("log", "");
        if (!j.at("match_fraction").is_null()) o.match_fraction = j.at("match_fraction").get<double>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("cached outcome: ") + e.what());
    }
    return o;
}

std::string normalize_ws(std::string_view line) {
    std::string out;
    bool space = false;
    for (char c : line) {
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f') {
            space = true;
            continue;
        }
        if (space && !out.empty()) out.push_back(' ');
        space = false;
        out.push_back(c);
    }
    return out;
}

std::vector<std::string> filter_transcript(const std::vector<std::string>& lines,
                                           const std::vector<std::string>& ignore_patterns) {
    std::vector<std::regex> res;
    for (const auto& p : ignore_patterns) res.emplace_back(p);
    std::vector<std::string> out;
    for (const auto& l : lines) {
        bool drop = std::any_of(res.begin(), res.end(), [&](const std::regex& re) { return std::regex_search(l, re); });
        if (!drop) out.push_back(l);
    }
    return out;
}

double match_outputs(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
    std::size_t equal = 0;
    for (std::size_t i = 0; i < reference.size() && i < candidate.size(); ++i)
        if (normalize_ws(candidate[i]) == normalize_ws(reference[i])) ++equal;
    return static_cast<double>(equal) / static_cast<double>(std::max<std::size_t>(reference.size(), 1));
}

namespace {

std::string substitute(std::string tmpl, const std::map<std::string, std::string>& vars) {
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i);
            if (close != std::string::npos) {
                auto it = vars.find(tmpl.substr(i + 1, close - i - 1));
                if (it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tmpl[i++];
    }
    return out;
}

std::string make_scratch(const ToolchainConfig& cfg) {
    fs::path root = cfg.scratch_root.empty() ? fs::temp_directory_path() / "crux-sim" : fs::path(cfg.scratch_root);
    std::error_code ec;
    fs::create_directories(root, ec);
    std::string tmpl = (root / "job-XXXXXX").string();
    if (!mkdtemp(tmpl.data()))
        throw Error(ErrorCode::IoError, fmt::format("cannot create scratch dir under {}", root.string()));
    return tmpl;
}

std::string clip_log(std::string s) {
    constexpr std::size_t kMax = 16384;
    if (s.size() > kMax) {
        s.resize(kMax);
        s += "\n[truncated]";
    }
    return s;
}

} // namespace

SimOutcome run_sim(const SimJob& job, const ToolchainConfig& toolchain) {
    if (job.timeout_ms <= 0) throw Error(ErrorCode::InvalidArgument, "timeout_ms must be positive");
    check_toolchain(toolchain);

    SimOutcome o;
    const std::string scratch = make_scratch(toolchain);
    o.scratch_dir = scratch;
    const fs::path dir(scratch);
    write_text_file(dir / "design.v", job.design_source);
    write_text_file(dir / "tb.v", job.testbench_source);
    const std::map<std::string, std::string> vars = {
        {"design", proc::shell_quote((dir / "design.v").string())},
        {"tb", proc::shell_quote((dir / "tb.v").string())},
        {"out", proc::shell_quote((dir / "sim.out").string())},
        {"top", proc::shell_quote(job.top_module)},
        {"scratch", proc::shell_quote(scratch)},
    };

    auto compile = proc::run_shell(substitute(toolchain.compile_cmd, vars), scratch, toolchain.env,
                                   toolchain.compile_timeout_ms);
    o.wall_ms = compile.wall_ms;
    o.log = compile.err.empty() ? compile.out : compile.err + compile.out;
    if (compile.timed_out || compile.term_signal != 0 || compile.exit_code != 0) {
        o.status = compile.timed_out ? SimStatus::Timeout : SimStatus::CompileError;
        if (compile.timed_out) o.log += "\ncompile step timed out";
    } else {
        o.compile_ok = true;
        auto run = proc::run_shell(substitute(toolchain.run_cmd, vars), scratch, toolchain.env, job.timeout_ms);
        o.wall_ms += run.wall_ms;
        o.log += run.err;
        o.stdout_lines = filter_transcript(split_lines(run.out), toolchain.ignore_line_patterns);
        if (run.timed_out) o.status = SimStatus::Timeout;
        // a shell in between reports a signal death as 128+N
        else if (run.term_signal != 0 || (run.exit_code > 128 && run.exit_code < 160)) o.status = SimStatus::Crash;
        else if (run.exit_code != 0) o.status = SimStatus::RunFailed;
        else {
            o.status = SimStatus::Ok;
            o.ran_ok = true;
            o.match_fraction = job.reference_lines ? match_outputs(o.stdout_lines, *job.reference_lines) : 1.0;
        }
    }
    o.log = clip_log(std::move(o.log));
    if (!toolchain.keep_artifacts) {
        std::error_code ec;
        fs::remove_all(dir, ec);
    }
    return o;
}

double pass_at_k(int n, int c, int k) {
    if (n < 0 || c < 0 || c > n || k < 1 || k > n)
        throw Error(ErrorCode::DomainError, fmt::format("pass@k needs 0<=c<=n and 1<=k<=n (n={}, c={}, k={})", n, c, k));
    if (c == 0) return 0.0;
    if (n - c < k) return 1.0;
    double prod = 1.0;
    for (int i = n - c + 1; i <= n; ++i) prod *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
    return 1.0 - prod;
}

PassAtKReport report_from_tallies(const std::map<std::string, Tally>& tallies, const std::vector<int>& k_values) {
    if (tallies.empty()) throw Error(ErrorCode::EmptyInput, "no tasks to report");
    PassAtKReport r;
    r.per_task = tallies;
    r.k_values = k_values;
    for (int k : k_values) {
        if (k < 1) throw Error(ErrorCode::DomainError, fmt::format("k must be positive, got {}", k));
        double sum = 0;
        for (const auto& [id, t] : tallies) {
            if (t.c < 0 || t.c > t.n) throw Error(ErrorCode::DomainError, fmt::format("task '{}': c > n", id));
            double est;
            if (t.n == 0) {
                est = 0.0;
                r.warnings.push_back(fmt::format("task '{}' has no candidates; pass@{} = 0", id, k));
            } else if (t.n < k) {
                est = t.c > 0 ? 1.0 : 0.0;
                r.warnings.push_back(fmt::format("task '{}' has n={} < k={}; using all samples", id, t.n, k));
            } else {
                est = pass_at_k(t.n, t.c, k);
            }
            r.estimates[{id, k}] = est;
            sum += est;
        }
        r.aggregate[k] = sum / static_cast<double>(tallies.size());
    }
    return r;
}

PassAtKReport aggregate_report(const std::map<std::string, std::vector<SimOutcome>>& samples,
                               double correctness_threshold, const std::vector<int>& k_values) {
    if (!(correctness_threshold > 0.0 && correctness_threshold <= 1.0))
        throw Error(ErrorCode::DomainError, "correctness threshold must be in (0, 1]");
    if (samples.empty()) throw Error(ErrorCode::EmptyInput, "no tasks to report");
    std::map<std::string, Tally> tallies;
    for (const auto& [id, outs] : samples) {
        Tally t{static_cast<int>(outs.size()), 0};
        for (const auto& o : outs)
            if (o.ran_ok && o.match_fraction && *o.match_fraction >= correctness_threshold) ++t.c;
        tallies[id] = t;
    }
    return report_from_tallies(tallies, k_values);
}

std::string report_jsonl(const PassAtKReport& r, const json& meta) {
    std::string out;
    for (const auto& [id, t] : r.per_task) {
        json row = {{"task_id", id}, {"n", t.n}, {"c", t.c}};
        for (int k : r.k_values) row[fmt::format("pass@{}", k)] = r.estimates.at({id, k});
        for (const auto& [key, v] : meta.items()) row[key] = v;
        out += row.dump() + "\n";
    }
    return out;
}

std::string report_text(const PassAtKReport& r) {
    std::size_t w = 4;
    for (const auto& [id, t] : r.per_task) w = std::max(w, id.size());
    std::string out = fmt::format("{:<{}}  {:>4}  {:>4}", "task", w, "n", "c");
    for (int k : r.k_values) out += fmt::format("  {:>8}", fmt::format("pass@{}", k));
    out += "\n";
    for (const auto& [id, t] : r.per_task) {
        out += fmt::format("{:<{}}  {:>4}  {:>4}", id, w, t.n, t.c);
        for (int k : r.k_values) out += fmt::format("  {:>8.4f}", r.estimates.at({id, k}));
        out += "\n";
    }
    out += fmt::format("{:<{}}  {:>4}  {:>4}", "mean", w, "", "");
    for (int k : r.k_values) out += fmt::format("  {:>8.4f}", r.aggregate.at(k));
    out += "\n";
    for (const auto& wmsg : r.warnings) out += "warning: " + wmsg + "\n";
    return out;
}

std::string report_csv(const PassAtKReport& r) {
    std::string out = "task_id,n,c";
    for (int k : r.k_values) out += fmt::format(",pass@{}", k);
    out += "\n";
    for (const auto& [id, t] : r.per_task) {
        out += fmt::format("{},{},{}", id, t.n, t.c);
        for (int k : r.k_values) out += fmt::format(",{:.6f}", r.estimates.at({id, k}));
        out += "\n";
    }
    out += "mean,,";
    for (int k : r.k_values) out += fmt::format(",{:.6f}", r.aggregate.at(k));
    out += "\n";
    return out;
}

Testbench load_testbench(const std::string& dir, const std::string& task_id, const std::string& reference_code) {
    fs::path p = fs::path(dir) / (task_id + "_tb.v");
    if (!fs::exists(p)) throw Error(ErrorCode::IoError, fmt::format("testbench not found: {}", p.string()));
    Testbench tb{task_id, reference_code, read_text_file(p), "tb"};
    static const std::regex kModule(R"(\bmodule\s+([A-Za-z_][A-Za-z0-9_$]*))");
    auto stripped = verilog::strip_comments_and_attributes(tb.source);
    std::smatch m;
    if (!std::regex_search(stripped, m, kModule))
        throw Error(ErrorCode::NoModuleFound, fmt::format("no module in {}", p.string()));
    tb.top_module = m[1];
    return tb;
}

Verifier::Verifier(ToolchainConfig toolchain, std::size_t jobs, long timeout_ms, std::string cache_dir)
    : toolchain_(std::move(toolchain)), fingerprint_(toolchain_.fingerprint()), jobs_(std::max<std::size_t>(jobs, 1)),
      timeout_ms_(timeout_ms), cache_dir_(std::move(cache_dir)) {
    check_toolchain(toolchain_);
    if (!cache_dir_.empty()) fs::create_directories(cache_dir_);
}

SimOutcome Verifier::run_or_load(const std::string& key, const SimJob& job) {
    if (cache_dir_.empty()) return run_sim(job, toolchain_);
    const fs::path file = fs::path(cache_dir_) / (key + ".json");
    if (fs::exists(file)) {
        try {
            return outcome_from_cache_json(json::parse(read_text_file(file)));
        } catch (const std::exception&) {
            // unreadable entry: fall through and recompute
        }
    }
    auto o = run_sim(job, toolchain_);
    // Timeouts depend on machine load, so they are never persisted.
    if (o.status != SimStatus::Timeout) {
        const fs::path tmp = file.string() + fmt::format(".tmp{}-{}", static_cast<long>(getpid()), std::hash<std::thread::id>{}(std::this_thread::get_id()));
        write_text_file(tmp, to_cache_json(o).dump());
        std::error_code ec;
        fs::rename(tmp, file, ec);
    }
    return o;
}

SimOutcome Verifier::cached(const std::string& key, const SimJob& job) {
    std::promise<SimOutcome> promise;
    std::shared_future<SimOutcome> fut;
    bool owner = false;
    {
        std::lock_guard lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) {
            fut = it->second;
        } else {
            fut = promise.get_future().share();
            cache_.emplace(key, fut);
            owner = true;
            ++runs_;
        }
    }
    if (owner) {
        try {
            promise.set_value(run_or_load(key, job));
        } catch (...) {
            promise.set_exception(std::current_exception());
        }
    }
    return fut.get();
}

SimOutcome Verifier::reference(const Testbench& bench) {
    SimJob job{bench.reference_code, bench.source, bench.top_module, timeout_ms_, std::nullopt};
    auto key = sha256_hex(fingerprint_ + "\0ref\0"s + bench.reference_code + "\0"s + bench.source + "\0"s +
                          bench.top_module);
    auto o = cached(key, job);
    if (!o.ran_ok)
        throw Error(ErrorCode::InvalidArgument, fmt::format("reference of task '{}' does not run ({}): {}",
                                                            bench.task_id, to_string(o.status), o.log));
    return o;
}

SimOutcome Verifier::verify(const Testbench& bench, const std::string& candidate_code) {
    auto ref = reference(bench);
    if (candidate_code == bench.reference_code) return ref;
    SimJob job{candidate_code, bench.source, bench.top_module, timeout_ms_, ref.stdout_lines};
    std::string ref_digest;
    for (const auto& l : ref.stdout_lines) ref_digest += l + "\n";
    auto key = sha256_hex(fingerprint_ + "\0cand\0"s + candidate_code + "\0"s + bench.source + "\0"s +
                          bench.top_module + "\0"s + sha256_hex(ref_digest));
    return cached(key, job);
}

std::vector<SimOutcome> Verifier::verify_all(const std::vector<std::pair<const Testbench*, std::string>>& work) {
    std::vector<SimOutcome> out(work.size());
    std::vector<std::exception_ptr> errors(work.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < work.size(); i = next++) {
            try {
                out[i] = verify(*work[i].first, work[i].second);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < std::min(jobs_, work.size()); ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

std::size_t Verifier::simulations_run() const {
    std::lock_guard lock(mu_);
    return runs_;
}

} // namespace crux::verify
