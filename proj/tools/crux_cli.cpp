// crux: command-line driver for dataset reconstruction, rollouts, rewards and
// evaluation.
//
// Exit codes: 0 success, 1 internal error, 2 usage or configuration error.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <unistd.h>

#include "crux/corpus.hpp"
#include "crux/crux_document.hpp"
#include "crux/error.hpp"
#include "crux/gateway.hpp"
#include "crux/grpo.hpp"
#include "crux/process.hpp"
#include "crux/reward.hpp"
#include "crux/util.hpp"
#include "crux/verification.hpp"
#include "crux/verilog_interface.hpp"

#ifndef CRUX_DEFAULT_TOOLCHAIN_DIR
#define CRUX_DEFAULT_TOOLCHAIN_DIR ""
#endif

namespace fs = std::filesystem;
using namespace crux;
using crux::json;

namespace {

// Thrown for problems the user can fix by changing arguments or files.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, std::string_view what) {
    if (path.empty()) throw UsageError(fmt::format("missing {} path", what));
    if (!fs::exists(path)) throw UsageError(fmt::format("{} not found: {}", what, path));
}

void require_dir(const std::string& path, std::string_view what) {
    if (path.empty()) throw UsageError(fmt::format("missing {} directory", what));
    if (!fs::is_directory(path)) throw UsageError(fmt::format("{} directory not found: {}", what, path));
}

template <class T>
T cfg_value(const json& j, const char* key, T dflt) {
    return j.contains(key) ? j.at(key).get<T>() : dflt;
}

struct RunConfig {
    json file = json::object();
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    bool keep_artifacts = false;
    std::string mock_provider;
    std::string sim_cache;

    corpus::PipelinePolicies policies;
    std::vector<std::string> keywords = corpus::default_keywords();
    int probe_n = 1;
    reward::WeightSchedule schedule;
    double epsilon = 0.2;
    double beta = 0.0;
    double eps_std = 1e-8;
    int group_size = 5;
    std::vector<int> k_values{1, 5, 10};
    double threshold = 1.0;
    long timeout_ms = 10000;
    std::string toolchain = "auto";
    gateway::ProviderConfig provider;
    std::string rollout_template =
        "{realspec}\n\nFirst write the CRUX for this task with the sections Module Interface, Core Functions and "
        "Key Considerations. Then write the complete Verilog module in a ```verilog block.\n";
    double temperature = 1.0;
    double top_p = 0.99;
    int max_tokens = 4096;

    std::string provider_digest; // hash of the mock script or the endpoint

    json effective() const {
        return {{"seed", seed},
                {"degradation", corpus::to_json(policies.degradation)},
                {"augmentation", corpus::to_json(policies.augmentation)},
                {"keywords", keywords},
                {"probe_n", probe_n},
                {"schedule", reward::to_json(schedule)},
                {"grpo", {{"epsilon", epsilon}, {"beta", beta}, {"eps_std", eps_std}, {"group_size", group_size}}},
                {"k_values", k_values},
                {"threshold", threshold},
                {"timeout_ms", timeout_ms},
                {"rollout_template", rollout_template},
                {"score_template", provider.score_template},
                {"sampling", {{"temperature", temperature}, {"top_p", top_p}, {"max_tokens", max_tokens}}},
                {"provider", provider_digest}};
    }

    std::string hash() const { return sha256_hex(effective().dump()).substr(0, 16); }
};

void load_config(RunConfig& rc, const std::string& path) {
    if (path.empty()) return;
    require_file(path, "config file");
    try {
        rc.file = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw UsageError(fmt::format("config file {}: {}", path, e.what()));
    }
    const json& j = rc.file;
    try {
        if (j.contains("seed")) rc.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("degradation")) rc.policies.degradation = corpus::degradation_policy_from_json(j.at("degradation"));
        if (j.contains("augmentation"))
            rc.policies.augmentation = corpus::augmentation_policy_from_json(j.at("augmentation"));
        rc.keywords = cfg_value(j, "keywords", rc.keywords);
        rc.probe_n = cfg_value(j, "probe_n", rc.probe_n);
        if (j.contains("schedule")) rc.schedule = reward::weight_schedule_from_json(j.at("schedule"));
        if (j.contains("grpo")) {
            const auto& g = j.at("grpo");
            rc.epsilon = cfg_value(g, "epsilon", rc.epsilon);
            rc.beta = cfg_value(g, "beta", rc.beta);
            rc.eps_std = cfg_value(g, "eps_std", rc.eps_std);
            rc.group_size = cfg_value(g, "group_size", rc.group_size);
        }
        rc.k_values = cfg_value(j, "k_values", rc.k_values);
        rc.threshold = cfg_value(j, "threshold", rc.threshold);
        rc.timeout_ms = cfg_value(j, "timeout_ms", rc.timeout_ms);
        rc.toolchain = cfg_value(j, "toolchain", rc.toolchain);
        rc.rollout_template = cfg_value(j, "rollout_template", rc.rollout_template);
        if (j.contains("provider")) rc.provider = gateway::provider_config_from_json(j.at("provider"));
        if (j.contains("sampling")) {
            const auto& s = j.at("sampling");
            rc.temperature = cfg_value(s, "temperature", rc.temperature);
            rc.top_p = cfg_value(s, "top_p", rc.top_p);
            rc.max_tokens = cfg_value(s, "max_tokens", rc.max_tokens);
        }
        rc.sim_cache = cfg_value(j, "sim_cache", rc.sim_cache);
    } catch (const json::exception& e) {
        throw UsageError(fmt::format("config file {}: {}", path, e.what()));
    } catch (const Error& e) {
        throw UsageError(fmt::format("config file {}: {}", path, e.what()));
    }
}

void finalize_config(RunConfig& rc) {
    if (rc.probe_n < 1) throw UsageError("probe_n must be >= 1");
    if (rc.group_size < 2) throw UsageError("grpo.group_size must be >= 2");
    if (!(rc.epsilon > 0) || rc.beta < 0) throw UsageError("grpo.epsilon must be > 0 and grpo.beta >= 0");
    if (!(rc.threshold > 0 && rc.threshold <= 1)) throw UsageError("threshold must be in (0, 1]");
    for (int k : rc.k_values)
        if (k < 1) throw UsageError("k_values must be positive");
    if (rc.timeout_ms <= 0) throw UsageError("timeout_ms must be positive");
    if (!rc.mock_provider.empty()) {
        rc.provider.kind = "mock";
        rc.provider.mock_script = rc.mock_provider;
    }
    if (rc.provider.kind == "mock") {
        if (!rc.provider.mock_script.empty()) {
            require_file(rc.provider.mock_script, "mock provider script");
            rc.provider_digest = "mock:" + sha256_hex(read_text_file(rc.provider.mock_script)).substr(0, 16);
        } else {
            rc.provider_digest = "mock:none";
        }
    } else {
        rc.provider_digest = "http:" + rc.provider.http.base_url + "/" + rc.provider.http.model;
    }
}

json with_meta(json row, const RunConfig& rc) {
    row["config_hash"] = rc.hash();
    row["seed"] = rc.seed;
    return row;
}

std::string meta_line(const RunConfig& rc) { return fmt::format("# config_hash={} seed={}\n", rc.hash(), rc.seed); }

void write_rows(const std::string& path, const std::vector<json>& rows) {
    std::string out;
    for (const auto& r : rows) out += r.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    write_text_file(path, out);
}

std::vector<json> read_rows(const std::string& path, std::string_view what) {
    require_file(path, what);
    try {
        return read_jsonl(path);
    } catch (const Error& e) {
        throw UsageError(e.what());
    }
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads.
template <class F>
void parallel_for(std::size_t n, std::size_t jobs, F fn) {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < std::max<std::size_t>(1, std::min(jobs, n)); ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

std::string self_dir() {
    std::error_code ec;
    auto p = fs::read_symlink("/proc/self/exe", ec);
    return ec ? "" : p.parent_path().string();
}

verify::ToolchainConfig resolve_toolchain(const RunConfig& rc) {
    auto finish = [&](verify::ToolchainConfig t) {
        t.keep_artifacts = t.keep_artifacts || rc.keep_artifacts;
        verify::check_toolchain(t);
        return t;
    };
    const std::string& name = rc.toolchain;
    if (name.size() > 5 && name.ends_with(".json")) {
        require_file(name, "toolchain config");
        return finish(verify::load_toolchain(name));
    }
    std::vector<std::string> dirs;
    if (const char* env = std::getenv("CRUX_TOOLCHAIN_DIR")) dirs.emplace_back(env);
    if (auto d = self_dir(); !d.empty()) dirs.push_back(d + "/toolchains");
    if (std::string(CRUX_DEFAULT_TOOLCHAIN_DIR).size()) dirs.emplace_back(CRUX_DEFAULT_TOOLCHAIN_DIR);
    auto find = [&](const std::string& n) -> std::optional<std::string> {
        for (const auto& d : dirs)
            if (fs::exists(d + "/" + n + ".json")) return d + "/" + n + ".json";
        return std::nullopt;
    };
    if (name == "auto") {
        for (const char* cand : {"iverilog", "verilator"}) {
            auto p = find(cand);
            if (!p) continue;
            auto t = verify::load_toolchain(*p);
            try {
                return finish(t);
            } catch (const Error&) {
                continue;
            }
        }
        throw Error(ErrorCode::ToolchainMissing, "no simulator found (tried iverilog, verilator)");
    }
    auto p = find(name);
    if (!p) throw UsageError(fmt::format("unknown toolchain '{}'", name));
    return finish(verify::load_toolchain(*p));
}

std::map<std::string, corpus::RawPair> index_pairs(const std::vector<json>& rows) {
    std::map<std::string, corpus::RawPair> out;
    for (const auto& r : rows) {
        auto p = corpus::raw_pair_from_json(r);
        out[p.id] = p;
    }
    return out;
}

std::shared_ptr<gateway::Provider> open_provider(const RunConfig& rc) {
    if (rc.provider.kind == "mock" && rc.provider.mock_script.empty())
        throw UsageError("this command needs a model provider (--mock-provider or provider in --config)");
    return gateway::make_provider(rc.provider);
}

gateway::GatewayClient open_client(const RunConfig& rc) {
    return gateway::GatewayClient(open_provider(rc), rc.provider.retry, rc.provider.max_in_flight,
                                  rc.provider.audit_path);
}

// categorize -------------------------------------------------------------------

struct CategorizeArgs {
    std::string input, verdicts, out, testbenches;
};

int cmd_categorize(RunConfig& rc, const CategorizeArgs& a) {
    auto rows = read_rows(a.input, "input file");
    std::map<std::string, corpus::ProbeVerdict> verdicts;
    if (!a.verdicts.empty()) {
        for (const auto& v : read_rows(a.verdicts, "verdict file")) {
            auto s = to_lower(v.at("verdict").get<std::string>());
            if (s != "pass" && s != "fail") throw UsageError(fmt::format("bad verdict '{}'", s));
            verdicts[v.at("id").get<std::string>()] = s == "pass" ? corpus::ProbeVerdict::Pass : corpus::ProbeVerdict::Fail;
        }
    } else {
        require_dir(a.testbenches, "testbench");
    }

    std::vector<corpus::RawPair> pairs;
    for (const auto& r : rows) pairs.push_back(corpus::raw_pair_from_json(r));

    if (a.verdicts.empty()) {
        // Live probe: the policy answers the raw description; Easy iff every probe passes.
        auto client = open_client(rc);
        verify::Verifier verifier(resolve_toolchain(rc), rc.jobs, rc.timeout_ms, rc.sim_cache);
        std::vector<corpus::ProbeVerdict> live(pairs.size());
        parallel_for(pairs.size(), rc.jobs, [&](std::size_t i) {
            const auto& p = pairs[i];
            auto bench = verify::load_testbench(a.testbenches, p.id, p.reference_code);
            gateway::GenRequest req{p.description + "\n\nWrite the complete Verilog module in a ```verilog block.\n",
                                    rc.probe_n, rc.temperature, rc.top_p, rc.max_tokens,
                                    derive_seed(rc.seed, p.id + "/probe")};
            bool all = true;
            for (const auto& c : client.generate(req)) {
                auto code = doc::split_generation(c).code_text;
                auto o = code.empty() ? verify::SimOutcome{} : verifier.verify(bench, code);
                all = all && o.ran_ok && o.match_fraction && *o.match_fraction >= rc.threshold;
            }
            live[i] = all ? corpus::ProbeVerdict::Pass : corpus::ProbeVerdict::Fail;
        });
        for (std::size_t i = 0; i < pairs.size(); ++i) verdicts[pairs[i].id] = live[i];
    }

    std::map<std::string, int> counts;
    std::vector<json> out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        auto it = verdicts.find(pairs[i].id);
        if (it == verdicts.end()) throw UsageError(fmt::format("no probe verdict for task '{}'", pairs[i].id));
        auto cat = corpus::categorize(pairs[i], it->second, rc.keywords);
        counts[std::string(corpus::to_string(cat))]++;
        json row = rows[i];
        row["category"] = corpus::to_string(cat);
        row["probe"] = it->second == corpus::ProbeVerdict::Pass ? "pass" : "fail";
        out.push_back(with_meta(row, rc));
    }
    write_rows(a.out, out);
    for (const char* c : {"EasyQuestion", "SpecialNonText", "NormalData"}) fmt::print("{}: {}\n", c, counts[c]);
    return 0;
}

// derive-crux --------------------------------------------------------------------

int cmd_derive_emit(RunConfig& rc, const std::string& input, const std::string& out) {
    std::vector<json> rows;
    for (const auto& r : read_rows(input, "input file")) {
        auto pair = corpus::raw_pair_from_json(r);
        auto cat = corpus::category_from_string(r.at("category").get<std::string>());
        if (cat == corpus::Category::EasyQuestion) continue;
        rows.push_back(with_meta(corpus::to_json(corpus::make_crux_derivation_prompt(pair, cat)), rc));
    }
    write_rows(out, rows);
    fmt::print("{} prompt bundles\n", rows.size());
    return 0;
}

int cmd_derive_run(RunConfig& rc, const std::string& prompts, const std::string& out) {
    auto rows = read_rows(prompts, "prompt file");
    auto client = open_client(rc);
    std::vector<json> results(rows.size());
    parallel_for(rows.size(), rc.jobs, [&](std::size_t i) {
        const auto& b = rows[i];
        const auto id = b.at("id").get<std::string>();
        json t = {{"id", id}};
        std::string diagram;
        for (const auto& st : b.at("stages")) {
            corpus::PromptStage stage{st.at("stage").get<std::string>(), st.at("prompt").get<std::string>()};
            std::string prompt = stage.stage == "validate" ? corpus::fill_validation_prompt(stage, diagram) : stage.prompt;
            gateway::GenRequest req{prompt, 1, 0.0, 1.0, rc.max_tokens, derive_seed(rc.seed, id + "/" + stage.stage)};
            auto reply = client.generate(req).at(0);
            if (stage.stage == "diagram") diagram = reply;
            t[stage.stage] = reply;
        }
        results[i] = with_meta(t, rc);
    });
    write_rows(out, results);
    fmt::print("{} transcripts\n", results.size());
    return 0;
}

// build-dataset ------------------------------------------------------------------

int cmd_build_dataset(RunConfig& rc, const std::string& input, const std::string& transcripts,
                      const std::string& out_dir) {
    auto rows = read_rows(input, "input file");
    std::map<std::string, corpus::DerivationTranscripts> tr;
    if (!transcripts.empty()) {
        for (const auto& t : read_rows(transcripts, "transcript file")) {
            corpus::DerivationTranscripts d;
            if (t.contains("extract")) d.extract = t.at("extract").get<std::string>();
            if (t.contains("diagram")) d.diagram = t.at("diagram").get<std::string>();
            if (t.contains("validate")) d.validate = t.at("validate").get<std::string>();
            tr[t.at("id").get<std::string>()] = d;
        }
    }
    std::vector<json> dataset, reclassified;
    std::map<std::string, int> counts;
    for (const auto& r : rows) {
        auto pair = corpus::raw_pair_from_json(r);
        auto cat = corpus::category_from_string(r.at("category").get<std::string>());
        auto res = corpus::reconstruct_task(pair, cat, tr[pair.id], rc.policies, rc.seed, rc.hash());
        if (auto* rec = std::get_if<corpus::TaskRecord>(&res)) {
            counts[std::string(corpus::to_string(cat))]++;
            dataset.push_back(with_meta(corpus::to_json(*rec), rc));
        } else {
            const auto& re = std::get<corpus::Reclassification>(res);
            json row = r;
            row["category"] = corpus::to_string(re.to);
            row["from_category"] = corpus::to_string(cat);
            row["reason"] = re.reason;
            reclassified.push_back(with_meta(row, rc));
        }
    }
    fs::create_directories(out_dir);
    write_rows((fs::path(out_dir) / "dataset.jsonl").string(), dataset);
    write_rows((fs::path(out_dir) / "reclassified.jsonl").string(), reclassified);
    fmt::print("dataset: {} records ({} Easy, {} Special, {} Normal); reclassified: {}\n", dataset.size(),
               counts["EasyQuestion"], counts["SpecialNonText"], counts["NormalData"], reclassified.size());
    return 0;
}

// rollout ----------------------------------------------------------------------

int cmd_rollout(RunConfig& rc, const std::string& dataset_path, const std::string& out, long step) {
    auto rows = read_rows(dataset_path, "dataset file");
    auto client = open_client(rc);
    std::vector<json> results(rows.size());
    parallel_for(rows.size(), rc.jobs, [&](std::size_t i) {
        auto rec = corpus::task_record_from_json(rows[i]);
        std::string prompt = gateway::render_score_prompt(rc.rollout_template, rec.realspec, "");
        gateway::GenRequest req{prompt, rc.group_size, rc.temperature, rc.top_p, rc.max_tokens,
                                derive_seed(rc.seed, rec.id + "/rollout/" + std::to_string(step))};
        json group = json::array();
        for (const auto& completion : client.generate(req)) {
            auto parts = doc::split_generation(completion);
            json ro = {{"completion", completion}, {"crux_text", parts.crux_text}, {"code_text", parts.code_text}};
            // Policy logprobs of the sampled output; with no trainer in the loop the
            // current, behaviour and reference policies are the same model.
            try {
                auto lp = client.score({prompt, completion});
                ro["logprobs_old"] = reward::to_json(lp);
                ro["logprobs_new"] = reward::to_json(lp);
                ro["logprobs_ref"] = reward::to_json(lp);
            } catch (const Error& e) {
                ro["logprob_error"] = e.what();
            }
            try {
                std::string sp = gateway::render_score_prompt(rc.provider.score_template, rec.realspec, parts.crux_text);
                ro["ref_code_logprobs"] = reward::to_json(client.score({sp, rec.reference_code}));
            } catch (const Error& e) {
                ro["ref_code_logprobs"] = nullptr;
                ro["ref_code_error"] = e.what();
            }
            group.push_back(ro);
        }
        results[i] = with_meta({{"task_id", rec.id}, {"step", step}, {"rollouts", group}}, rc);
    });
    write_rows(out, results);
    fmt::print("{} rollout groups of {}\n", results.size(), rc.group_size);
    return 0;
}

// reward -----------------------------------------------------------------------

struct RewardArgs {
    std::string rollouts, dataset, testbenches, out, summary;
    std::optional<long> step;
};

int cmd_reward(RunConfig& rc, const RewardArgs& a) {
    auto groups = read_rows(a.rollouts, "rollout file");
    auto records = read_rows(a.dataset, "dataset file");
    require_dir(a.testbenches, "testbench");
    std::map<std::string, corpus::TaskRecord> by_id;
    for (const auto& r : records) {
        auto rec = corpus::task_record_from_json(r);
        by_id.emplace(rec.id, rec);
    }
    verify::Verifier verifier(resolve_toolchain(rc), rc.jobs, rc.timeout_ms, rc.sim_cache);

    std::vector<json> out(groups.size());
    parallel_for(groups.size(), rc.jobs, [&](std::size_t gi) {
        const auto& g = groups[gi];
        const auto task_id = g.value("task_id", std::string());
        const long step = a.step ? *a.step : g.value("step", 0L);
        json row = {{"task_id", task_id}, {"step", step}};
        try {
            auto it = by_id.find(task_id);
            if (it == by_id.end()) throw Error(ErrorCode::InvalidArgument, fmt::format("task '{}' not in dataset", task_id));
            const auto& rec = it->second;
            auto bench = verify::load_testbench(a.testbenches, rec.id, rec.reference_code);
            const auto ref_iface = verilog::parse_module_header(rec.reference_code);

            grpo::RolloutGroup group{task_id, {}};
            json rolled = json::array();
            std::vector<double> mixed;
            for (const auto& ro : g.at("rollouts")) {
                grpo::Rollout r;
                r.crux_text = ro.value("crux_text", std::string());
                r.code_text = ro.value("code_text", std::string());
                const double format_r = reward::format_reward(r.crux_text, ref_iface);
                auto outcome = r.code_text.empty() ? verify::SimOutcome{} : verifier.verify(bench, r.code_text);
                std::optional<reward::TokenLogProbSeq> ref_lp;
                if (ro.contains("ref_code_logprobs") && !ro.at("ref_code_logprobs").is_null())
                    ref_lp = reward::token_seq_from_json(ro.at("ref_code_logprobs"));
                auto cr = reward::crux_reward_or_zero(ref_lp);
                r.reward = reward::make_reward_vector(format_r, reward::compile_reward(outcome), cr.value,
                                                      reward::code_reward(outcome), rc.schedule, step);
                if (ro.contains("logprobs_new")) r.logprobs_new = reward::token_seq_from_json(ro.at("logprobs_new"));
                if (ro.contains("logprobs_old")) r.logprobs_old = reward::token_seq_from_json(ro.at("logprobs_old"));
                if (ro.contains("logprobs_ref") && !ro.at("logprobs_ref").is_null())
                    r.logprobs_ref = reward::token_seq_from_json(ro.at("logprobs_ref"));
                mixed.push_back(r.reward.mixed);
                json jr = {{"reward", reward::to_json(r.reward)}, {"sim", verify::to_json(outcome)}};
                if (!cr.diagnostic.empty()) jr["diagnostic"] = cr.diagnostic;
                rolled.push_back(jr);
                group.rollouts.push_back(std::move(r));
            }
            auto adv = grpo::group_advantages(mixed, rc.eps_std);
            for (std::size_t i = 0; i < rolled.size(); ++i) rolled[i]["advantage"] = adv.per_rollout[i];
            row["rollouts"] = rolled;
            row["degenerate"] = adv.degenerate;
            row["objective"] = grpo::to_json(grpo::clipped_objective(group, adv, rc.epsilon, rc.beta));
            row["status"] = "ok";
        } catch (const std::exception& e) {
            row["status"] = "failed";
            row["error"] = e.what();
        }
        out[gi] = with_meta(row, rc);
    });
    write_rows(a.out, out);

    // Per-step batch summary: one row per global step.
    struct Acc {
        int groups = 0, failed = 0, n = 0;
        double mixed = 0, f = 0, c = 0, x = 0, code = 0, surrogate = 0;
        std::string phase;
    };
    std::map<long, Acc> steps;
    for (const auto& row : out) {
        auto& acc = steps[row.at("step").get<long>()];
        if (row.at("status") != "ok") {
            acc.failed++;
            continue;
        }
        acc.groups++;
        acc.surrogate += row.at("objective").at("surrogate").get<double>();
        for (const auto& ro : row.at("rollouts")) {
            const auto& r = ro.at("reward");
            acc.n++;
            acc.mixed += r.at("mixed").get<double>();
            acc.f += r.at("format_r").get<double>();
            acc.c += r.at("compile_r").get<double>();
            acc.x += r.at("crux_r").get<double>();
            acc.code += r.at("code_r").get<double>();
            acc.phase = r.at("weights_phase").get<std::string>();
        }
    }
    std::string csv = meta_line(rc) +
                      "step,groups,failed_groups,rollouts,mean_mixed,mean_format_r,mean_compile_r,mean_crux_r,mean_code_r,"
                      "mean_surrogate,weights_phase\n";
    for (const auto& [step, acc] : steps) {
        const double n = std::max(acc.n, 1), gcount = std::max(acc.groups, 1);
        csv += fmt::format("{},{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", step, acc.groups, acc.failed,
                           acc.n, acc.mixed / n, acc.f / n, acc.c / n, acc.x / n, acc.code / n, acc.surrogate / gcount,
                           acc.phase.empty() ? (rc.schedule.phase(step) ? "late" : "early") : acc.phase);
    }
    if (!a.summary.empty()) write_text_file(a.summary, csv);
    std::cout << csv;
    return 0;
}

// evaluate ---------------------------------------------------------------------

struct EvalArgs {
    std::string candidates, references, testbenches, out_dir;
};

int cmd_evaluate(RunConfig& rc, const EvalArgs& a) {
    auto cand_rows = read_rows(a.candidates, "candidates file");
    auto refs = index_pairs(read_rows(a.references, "references file"));
    require_dir(a.testbenches, "testbench");
    // Aborts before any job when the simulator is missing.
    verify::Verifier verifier(resolve_toolchain(rc), rc.jobs, rc.timeout_ms, rc.sim_cache);

    std::vector<verify::Testbench> benches;
    std::vector<std::string> ids;
    for (const auto& row : cand_rows) {
        auto id = row.at("task_id").get<std::string>();
        auto it = refs.find(id);
        if (it == refs.end()) throw UsageError(fmt::format("task '{}' has no reference code", id));
        benches.push_back(verify::load_testbench(a.testbenches, id, it->second.reference_code));
        ids.push_back(id);
    }
    std::vector<std::pair<const verify::Testbench*, std::string>> work;
    std::vector<std::pair<std::size_t, std::size_t>> where;
    for (std::size_t t = 0; t < cand_rows.size(); ++t) {
        const auto& cands = cand_rows[t].at("candidates");
        for (std::size_t j = 0; j < cands.size(); ++j) {
            work.emplace_back(&benches[t], cands[j].get<std::string>());
            where.emplace_back(t, j);
        }
    }
    auto outcomes = verifier.verify_all(work);

    std::map<std::string, std::vector<verify::SimOutcome>> samples;
    for (const auto& id : ids) samples[id];
    std::vector<json> outcome_rows;
    for (std::size_t w = 0; w < work.size(); ++w) {
        const auto& o = outcomes[w];
        samples[ids[where[w].first]].push_back(o);
        json row = {{"task_id", ids[where[w].first]},
                    {"candidate", where[w].second},
                    {"compile_r", reward::compile_reward(o)},
                    {"code_r", reward::code_reward(o)},
                    {"sim", verify::to_json(o)}};
        outcome_rows.push_back(with_meta(row, rc));
    }
    auto report = verify::aggregate_report(samples, rc.threshold, rc.k_values);
    fs::create_directories(a.out_dir);
    const fs::path dir(a.out_dir);
    write_rows((dir / "outcomes.jsonl").string(), outcome_rows);
    write_text_file(dir / "report.jsonl", verify::report_jsonl(report, {{"config_hash", rc.hash()}, {"seed", rc.seed}}));
    write_text_file(dir / "report.txt", meta_line(rc) + verify::report_text(report));
    write_text_file(dir / "report.csv", meta_line(rc) + verify::report_csv(report));
    json agg = json::object();
    for (const auto& [k, v] : report.aggregate) agg[fmt::format("pass@{}", k)] = v;
    write_text_file(dir / "summary.json", with_meta({{"aggregate", agg}, {"tasks", report.per_task.size()}}, rc).dump(2) + "\n");
    for (const auto& w : report.warnings) fmt::print(stderr, "warning: {}\n", w);
    std::cout << verify::report_text(report);
    return 0;
}

// grpo-check -------------------------------------------------------------------

int cmd_grpo_check(RunConfig& rc, int instances, const std::string& out) {
    Rng rng(derive_seed(rc.seed, "grpo-check"));
    std::size_t failures = 0, checked = 0, excluded = 0;
    double max_rel = 0;
    std::vector<json> rows;
    for (int n = 0; n < instances; ++n) {
        const int G = 2 + static_cast<int>(rng.index(4));
        const int T = 1 + static_cast<int>(rng.index(8));
        const int V = 2 + static_cast<int>(rng.index(10));
        const double spread = 0.05 + 0.6 * rng.uniform();
        const double beta = n % 2 ? 0.04 : 0.0;
        auto inst = grpo::random_toy_instance(derive_seed(rc.seed, fmt::format("toy/{}", n)), G, T, V, spread);
        auto rep = grpo::objective_gradient_check(inst, rc.epsilon, beta, 1e-5);
        failures += rep.failures;
        checked += rep.checked;
        excluded += rep.excluded;
        max_rel = std::max(max_rel, rep.max_rel_err);
        rows.push_back(with_meta({{"instance", n},
                                  {"G", G},
                                  {"max_tokens", T},
                                  {"vocab", V},
                                  {"beta", beta},
                                  {"checked", rep.checked},
                                  {"excluded", rep.excluded},
                                  {"failures", rep.failures},
                                  {"max_rel_err", rep.max_rel_err}},
                                 rc));
    }
    if (!out.empty()) write_rows(out, rows);
    fmt::print("instances={} checked={} excluded={} failures={} max_rel_err={:.3e}\n", instances, checked, excluded,
               failures, max_rel);
    return failures == 0 && max_rel < 1e-3 ? 0 : 1;
}

// report -----------------------------------------------------------------------

int cmd_report(RunConfig& rc, const std::string& input, const std::string& out_dir) {
    // Rows are either {task_id, n, c} tallies or per-sample {task_id, correct}
    // (or evaluate's outcomes.jsonl, where code_r == 1 with a run counts).
    std::map<std::string, verify::Tally> tallies;
    for (const auto& r : read_rows(input, "input file")) {
        auto id = r.at("task_id").get<std::string>();
        auto& t = tallies[id];
        if (r.contains("n")) {
            t.n += r.at("n").get<int>();
            t.c += r.at("c").get<int>();
        } else if (r.contains("correct")) {
            t.n++;
            t.c += r.at("correct").get<bool>() ? 1 : 0;
        } else if (r.contains("sim")) {
            t.n++;
            const auto& s = r.at("sim");
            t.c += s.at("ran_ok").get<bool>() && !s.at("match_fraction").is_null() &&
                           s.at("match_fraction").get<double>() >= rc.threshold
                       ? 1
                       : 0;
        } else {
            throw UsageError(fmt::format("row for '{}' has neither n/c, correct nor sim", id));
        }
    }
    auto report = verify::report_from_tallies(tallies, rc.k_values);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text_file(fs::path(out_dir) / "report.txt", meta_line(rc) + verify::report_text(report));
        write_text_file(fs::path(out_dir) / "report.csv", meta_line(rc) + verify::report_csv(report));
        write_text_file(fs::path(out_dir) / "report.jsonl",
                        verify::report_jsonl(report, {{"config_hash", rc.hash()}, {"seed", rc.seed}}));
    }
    std::cout << verify::report_text(report);
    return 0;
}

int exit_code_for(ErrorCode c) {
    switch (c) {
    case ErrorCode::IoError:
    case ErrorCode::ParseError:
    case ErrorCode::InvalidArgument:
    case ErrorCode::ToolchainMissing:
    case ErrorCode::UnsupportedCategory: return 2;
    default: return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CRUX dataset, reward and evaluation tools"};
    app.require_subcommand(1);
    app.fallthrough();

    RunConfig rc;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> toolchain;
    app.add_option("--config", config_path, "run configuration JSON");
    app.add_option("--seed", seed, "master seed (overrides the config)");
    app.add_flag("--keep-artifacts", rc.keep_artifacts, "keep simulator scratch directories");
    app.add_option("--mock-provider", rc.mock_provider, "use the scripted mock provider");
    app.add_option("--jobs", rc.jobs, "worker threads")->check(CLI::PositiveNumber);
    app.add_option("--toolchain", toolchain, "toolchain name (auto, iverilog, verilator) or JSON path");
    app.add_option("--sim-cache", rc.sim_cache, "directory for cached simulation outcomes");

    CategorizeArgs cat_args;
    auto* cat = app.add_subcommand("categorize", "sort raw pairs into Easy / SpecialNonText / Normal");
    cat->add_option("--input", cat_args.input, "raw pairs JSONL")->required();
    cat->add_option("--verdicts", cat_args.verdicts, "probe verdict sidecar JSONL (omit for live probing)");
    cat->add_option("--testbenches", cat_args.testbenches, "testbench dir for live probing");
    cat->add_option("--out", cat_args.out, "categorized JSONL")->required();

    std::string derive_input, derive_out;
    auto* derive = app.add_subcommand("derive-crux", "emit or run CRUX derivation prompts");
    derive->require_subcommand(1);
    auto* emit = derive->add_subcommand("emit", "write prompt bundles");
    emit->add_option("--input", derive_input, "categorized JSONL")->required();
    emit->add_option("--out", derive_out, "prompt bundle JSONL")->required();
    auto* run = derive->add_subcommand("run", "answer prompt bundles with the provider");
    run->add_option("--prompts", derive_input, "prompt bundle JSONL")->required();
    run->add_option("--out", derive_out, "transcript JSONL")->required();

    std::string bd_input, bd_transcripts, bd_out;
    auto* bd = app.add_subcommand("build-dataset", "reconstruct (RealSpec, CRUX, code) records");
    bd->add_option("--input", bd_input, "categorized JSONL")->required();
    bd->add_option("--transcripts", bd_transcripts, "derivation transcript JSONL");
    bd->add_option("--out-dir", bd_out, "output directory")->required();

    std::string ro_dataset, ro_out;
    long ro_step = 0;
    std::optional<int> ro_group;
    auto* ro = app.add_subcommand("rollout", "sample rollout groups from the provider");
    ro->add_option("--dataset", ro_dataset, "dataset JSONL")->required();
    ro->add_option("--out", ro_out, "rollout JSONL")->required();
    ro->add_option("--step", ro_step, "global step recorded on the groups");
    ro->add_option("--group-size", ro_group, "rollouts per task");

    RewardArgs rw_args;
    std::optional<long> steps_per_epoch;
    auto* rw = app.add_subcommand("reward", "score rollouts, standardize advantages, evaluate the objective");
    rw->add_option("--rollouts", rw_args.rollouts, "rollout JSONL")->required();
    rw->add_option("--dataset", rw_args.dataset, "dataset JSONL")->required();
    rw->add_option("--testbenches", rw_args.testbenches, "testbench directory")->required();
    rw->add_option("--out", rw_args.out, "annotated rollout JSONL")->required();
    rw->add_option("--summary", rw_args.summary, "per-step summary CSV");
    rw->add_option("--global-step", rw_args.step, "override the step stored on each group");
    rw->add_option("--steps-per-epoch", steps_per_epoch, "schedule length of one epoch");

    EvalArgs ev_args;
    std::optional<std::vector<int>> ks;
    auto* ev = app.add_subcommand("evaluate", "pass@k of candidate sets");
    ev->add_option("--candidates", ev_args.candidates, "candidates JSONL {task_id, candidates}")->required();
    ev->add_option("--references", ev_args.references, "JSONL with id and reference_code")->required();
    ev->add_option("--testbenches", ev_args.testbenches, "testbench directory")->required();
    ev->add_option("--out-dir", ev_args.out_dir, "report directory")->required();
    ev->add_option("--k", ks, "k values")->delimiter(',');

    int gc_instances = 200;
    std::string gc_out;
    auto* gc = app.add_subcommand("grpo-check", "finite-difference check of the objective gradient");
    gc->add_option("--instances", gc_instances, "random toy instances")->check(CLI::PositiveNumber);
    gc->add_option("--out", gc_out, "per-instance JSONL");

    std::string rp_input, rp_out;
    auto* rp = app.add_subcommand("report", "pass@k tables from tallies or per-sample results");
    rp->add_option("--input", rp_input, "JSONL of {task_id,n,c}, {task_id,correct} or evaluate outcomes")->required();
    rp->add_option("--out-dir", rp_out, "report directory");
    rp->add_option("--k", ks, "k values")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc_exit = app.exit(e);
        return rc_exit == 0 ? 0 : 2;
    }

    try {
        load_config(rc, config_path);
        if (seed) rc.seed = *seed;
        if (toolchain) rc.toolchain = *toolchain;
        if (steps_per_epoch) rc.schedule.steps_per_epoch = *steps_per_epoch;
        if (ro_group) rc.group_size = *ro_group;
        if (ks) rc.k_values = *ks;
        reward::check_invariants(rc.schedule);
        finalize_config(rc);

        if (*cat) return cmd_categorize(rc, cat_args);
        if (*emit) return cmd_derive_emit(rc, derive_input, derive_out);
        if (*run) return cmd_derive_run(rc, derive_input, derive_out);
        if (*bd) return cmd_build_dataset(rc, bd_input, bd_transcripts, bd_out);
        if (*ro) return cmd_rollout(rc, ro_dataset, ro_out, ro_step);
        if (*rw) return cmd_reward(rc, rw_args);
        if (*ev) return cmd_evaluate(rc, ev_args);
        if (*gc) return cmd_grpo_check(rc, gc_instances, gc_out);
        if (*rp) return cmd_report(rc, rp_input, rp_out);
    } catch (const UsageError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const Error& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        fmt::print(stderr, "internal error: {}\n", e.what());
        return 1;
    }
    return 1;
}
