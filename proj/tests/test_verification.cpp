#include <doctest.h>

#include <atomic>
#include <chrono>
#include <set>
#include <thread>

#include <boost/multiprecision/cpp_int.hpp>
#include <fmt/format.h>

#include "crux/error.hpp"
#include "crux/process.hpp"
#include "crux/util.hpp"
#include "crux/verification.hpp"
#include "test_support.hpp"

using namespace crux;
using namespace crux::verify;
using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;
using testing_support::TempDir;

namespace {

cpp_int binom(int n, int k) {
    if (k < 0 || k > n) return 0;
    cpp_int r = 1;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// 1 - C(n-c,k)/C(n,k) as an exact rational.
cpp_rational exact_pass(int n, int c, int k) { return 1 - cpp_rational(binom(n - c, k), binom(n, k)); }

// "Designs" are shell scripts; a design compiles iff it mentions endmodule.
ToolchainConfig shell_toolchain(const std::string& scratch_root = "") {
    ToolchainConfig t;
    t.name = "shell";
    t.compile_cmd = "grep -q endmodule {design} && cp {design} {out}";
    t.run_cmd = "sh {out}";
    t.ignore_line_patterns = {"^# "};
    t.compile_timeout_ms = 5000;
    t.scratch_root = scratch_root;
    return t;
}

SimJob job(std::string script, long timeout_ms = 5000) {
    return {"# endmodule\n" + std::move(script), "", "tb", timeout_ms, std::nullopt};
}

} // namespace

TEST_CASE("pass@k against a big-integer oracle") {
    for (int n = 1; n <= 20; ++n)
        for (int c = 0; c <= n; ++c)
            for (int k : {1, 5, 10}) {
                if (k > n) {
                    CHECK_THROWS_AS(pass_at_k(n, c, k), Error);
                    continue;
                }
                double exact = static_cast<double>(exact_pass(n, c, k));
                CHECK(std::abs(pass_at_k(n, c, k) - exact) <= 1e-12);
            }
}

TEST_CASE("pass@k against subset enumeration") {
    for (int n = 1; n <= 12; ++n)
        for (int c = 0; c <= n; ++c)
            for (int k = 1; k <= n; ++k) {
                // First c samples are correct; count k-subsets containing one.
                long hit = 0, total = 0;
                for (unsigned mask = 0; mask < (1u << n); ++mask) {
                    if (__builtin_popcount(mask) != k) continue;
                    ++total;
                    hit += (mask & ((1u << c) - 1)) != 0;
                }
                cpp_rational frac(hit, total);
                CHECK(frac == exact_pass(n, c, k));
                CHECK(std::abs(pass_at_k(n, c, k) - static_cast<double>(frac)) <= 1e-12);
            }
}

TEST_CASE("pass@k domain") {
    CHECK(pass_at_k(5, 0, 1) == 0.0);
    CHECK(pass_at_k(5, 5, 5) == 1.0);
    CHECK(pass_at_k(10, 6, 5) == 1.0);
    CHECK(pass_at_k(4, 1, 1) == doctest::Approx(0.25));
    for (auto [n, c, k] : {std::tuple{5, 6, 1}, {5, -1, 1}, {5, 1, 0}, {5, 1, 6}}) {
        try {
            pass_at_k(n, c, k);
            FAIL("expected DomainError");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DomainError);
        }
    }
}

TEST_CASE("reports from tallies") {
    auto r = report_from_tallies({{"a", {20, 12}}, {"b", {0, 0}}, {"c", {3, 1}}}, {1, 5});
    CHECK(r.estimates.at({"a", 1}) == doctest::Approx(0.6));
    CHECK(r.estimates.at({"b", 1}) == 0.0);
    CHECK(r.estimates.at({"c", 5}) == 1.0);
    CHECK(r.warnings.size() == 3); // b twice, c once
    CHECK(r.aggregate.at(1) == doctest::Approx((0.6 + 0 + 1.0 / 3) / 3));
    CHECK_THROWS_AS(report_from_tallies({}, {1}), Error);

    auto csv = report_csv(r);
    CHECK(csv.rfind("task_id,n,c,pass@1,pass@5\n", 0) == 0);
    CHECK(csv.find("\nmean,,") != std::string::npos);
    auto jl = report_jsonl(r, {{"seed", 3}});
    CHECK(split_lines(jl).size() == 3);
    CHECK(json::parse(split_lines(jl)[0])["seed"] == 3);
    CHECK(report_text(r).find("warning:") != std::string::npos);
}

TEST_CASE("aggregate uses the correctness threshold") {
    SimOutcome good;
    good.ran_ok = good.compile_ok = true;
    good.status = SimStatus::Ok;
    good.match_fraction = 1.0;
    SimOutcome partial = good;
    partial.match_fraction = 0.75;
    SimOutcome broken;
    auto r = aggregate_report({{"t", {good, partial, broken}}}, 1.0, {1});
    CHECK(r.per_task.at("t").c == 1);
    auto loose = aggregate_report({{"t", {good, partial, broken}}}, 0.7, {1});
    CHECK(loose.per_task.at("t").c == 2);
    CHECK_THROWS_AS(aggregate_report({{"t", {good}}}, 0.0, {1}), Error);
}

TEST_CASE("transcript matching") {
    CHECK(normalize_ws("  a \t b  ") == "a b");
    CHECK(match_outputs({"1", "2", "3"}, {"1", "2", "3"}) == 1.0);
    CHECK(match_outputs({"1", "x", "3"}, {"1", "2", "3"}) == doctest::Approx(2.0 / 3));
    CHECK(match_outputs({"1"}, {"1", "2"}) == 0.5);
    CHECK(match_outputs({"1", "2", "3"}, {"1", "2"}) == 1.0);
    CHECK(match_outputs({}, {}) == 0.0);
    CHECK(match_outputs({"a  b"}, {"a b"}) == 1.0);
    auto f = filter_transcript({"x", "VCD info: dump", "y"}, {"^VCD info"});
    CHECK(f == std::vector<std::string>{"x", "y"});
}

TEST_CASE("run_sim statuses with a shell toolchain") {
    auto tc = shell_toolchain();
    auto ok = run_sim(job("echo a\necho '# chatter'\necho b\n"), tc);
    CHECK(ok.status == SimStatus::Ok);
    CHECK(ok.stdout_lines == std::vector<std::string>{"a", "b"});
    CHECK(ok.match_fraction == 1.0);

    auto j = job("echo a\necho c\n");
    j.reference_lines = std::vector<std::string>{"a", "b"};
    CHECK(run_sim(j, tc).match_fraction == 0.5);

    auto ce = run_sim({"no end here", "", "tb", 5000, std::nullopt}, tc);
    CHECK(ce.status == SimStatus::CompileError);
    CHECK_FALSE(ce.compile_ok);
    CHECK_FALSE(ce.match_fraction);

    auto rf = run_sim(job("echo partial\nexit 3\n"), tc);
    CHECK(rf.status == SimStatus::RunFailed);
    CHECK(rf.compile_ok);
    CHECK_FALSE(rf.ran_ok);

    auto crash = run_sim(job("kill -SEGV $$\n"), tc);
    CHECK(crash.status == SimStatus::Crash);

    auto t0 = std::chrono::steady_clock::now();
    auto to = run_sim(job("sh -c 'sleep 20' &\nsleep 20\n", 300), tc);
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0).count();
    CHECK(to.status == SimStatus::Timeout);
    CHECK(ms < 5000);

    CHECK_THROWS_AS(run_sim(job("echo", 0), tc), Error);
}

TEST_CASE("missing toolchain program") {
    auto tc = shell_toolchain();
    tc.compile_cmd = "definitely-not-a-simulator-xyz {design}";
    try {
        run_sim(job("echo"), tc);
        FAIL("expected ToolchainMissing");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ToolchainMissing);
        CHECK(std::string(e.what()).find("definitely-not-a-simulator-xyz") != std::string::npos);
    }
}

TEST_CASE("scratch dirs are removed unless kept") {
    TempDir root;
    auto tc = shell_toolchain(root.str());
    auto o = run_sim(job("echo x"), tc);
    CHECK_FALSE(std::filesystem::exists(o.scratch_dir));
    tc.keep_artifacts = true;
    auto kept = run_sim(job("echo x"), tc);
    CHECK(std::filesystem::exists(std::filesystem::path(kept.scratch_dir) / "design.v"));
}

TEST_CASE("32 concurrent jobs keep their scratch dirs apart") {
    TempDir root;
    auto tc = shell_toolchain(root.str());
    tc.keep_artifacts = true;
    std::vector<SimOutcome> outs(32);
    {
        std::vector<std::jthread> threads;
        for (int i = 0; i < 32; ++i)
            threads.emplace_back([&, i] { outs[i] = run_sim(job(fmt::format("sleep 0.05\necho job{}\n", i)), tc); });
    }
    std::set<std::string> dirs;
    for (int i = 0; i < 32; ++i) {
        CHECK(outs[i].status == SimStatus::Ok);
        CHECK(outs[i].stdout_lines == std::vector<std::string>{fmt::format("job{}", i)});
        dirs.insert(outs[i].scratch_dir);
        CHECK(read_text_file(std::filesystem::path(outs[i].scratch_dir) / "design.v").find(fmt::format("job{}", i)) !=
              std::string::npos);
    }
    CHECK(dirs.size() == 32);
}

TEST_CASE("toolchain json") {
    auto t = toolchain_from_json({{"name", "x"}, {"compile_cmd", "cp {design} {out}"}, {"run_cmd", "cat {out}"},
                                  {"ignore_line_patterns", {"^a"}}});
    CHECK(t.name == "x");
    CHECK(t.ignore_line_patterns.size() == 1);
    CHECK_THROWS_AS(toolchain_from_json({{"compile_cmd", "x"}, {"run_cmd", "y"}, {"ignore_line_patterns", {"(("}}}),
                    Error);
    auto t2 = t;
    t2.keep_artifacts = true;
    CHECK(t.fingerprint() == t2.fingerprint());
    t2.run_cmd = "sh {out}";
    CHECK(t.fingerprint() != t2.fingerprint());
    try {
        load_toolchain("/nonexistent/tc.json");
        FAIL("expected IoError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoError);
    }
}

TEST_CASE("outcome cache json round trip") {
    SimOutcome o;
    o.compile_ok = o.ran_ok = true;
    o.status = SimStatus::Ok;
    o.stdout_lines = {"1", "2"};
    o.match_fraction = 0.5;
    o.log = "warn";
    auto back = outcome_from_cache_json(to_cache_json(o));
    CHECK(back.stdout_lines == o.stdout_lines);
    CHECK(back.match_fraction == o.match_fraction);
    CHECK(back.status == o.status);
    CHECK(to_json(o).dump() == to_json(back).dump());
}

TEST_CASE("verifier: reference, shortcut, in-memory and disk cache") {
    TempDir tmp;
    auto counter = tmp.str("runs.txt");
    auto tc = shell_toolchain();
    tc.run_cmd = "echo run >> " + proc::shell_quote(counter) + "; sh {out}";
    const std::string ref = "# endmodule\necho 1\necho 2\necho 3\n";
    Testbench bench{"t", ref, "", "tb"};
    auto count = [&] { return std::filesystem::exists(counter) ? split_lines(read_text_file(counter)).size() : 0; };

    {
        Verifier v(tc, 4, 5000, tmp.str("cache"));
        auto same = v.verify(bench, ref);
        CHECK(same.match_fraction == 1.0);
        auto wrong = v.verify(bench, "# endmodule\necho 1\necho 9\necho 3\n");
        CHECK(wrong.match_fraction == doctest::Approx(2.0 / 3));
        auto again = v.verify(bench, "# endmodule\necho 1\necho 9\necho 3\n");
        CHECK(again.match_fraction == wrong.match_fraction);
        CHECK(count() == 2);
        CHECK(v.simulations_run() == 2);
    }
    {
        Verifier v(tc, 4, 5000, tmp.str("cache"));
        auto wrong = v.verify(bench, "# endmodule\necho 1\necho 9\necho 3\n");
        CHECK(wrong.match_fraction == doctest::Approx(2.0 / 3));
        CHECK(count() == 2); // served from disk
    }

    Testbench bad{"bad", "no module", "", "tb"};
    Verifier v(tc, 1);
    CHECK_THROWS_AS(v.reference(bad), Error);
}

TEST_CASE("verify_all keeps order and dedups identical work") {
    auto tc = shell_toolchain();
    Testbench bench{"t", "# endmodule\necho 1\necho 2\n", "", "tb"};
    Verifier v(tc, 4);
    std::vector<std::pair<const Testbench*, std::string>> work;
    for (int i = 0; i < 12; ++i) work.emplace_back(&bench, fmt::format("# endmodule\necho 1\necho {}\n", i % 3));
    auto outs = v.verify_all(work);
    REQUIRE(outs.size() == 12);
    for (int i = 0; i < 12; ++i) CHECK(*outs[i].match_fraction == (i % 3 == 2 ? 1.0 : 0.5));
    CHECK(v.simulations_run() == 3); // reference + 2 candidates; the third is the reference itself
}

TEST_CASE("load_testbench picks the first module as top") {
    TempDir tmp;
    write_text_file(tmp.path() / "x_tb.v", "// bench\nmodule bench_top;\nendmodule\nmodule helper; endmodule\n");
    auto tb = load_testbench(tmp.str(), "x", "module x(); endmodule");
    CHECK(tb.top_module == "bench_top");
    CHECK_THROWS_AS(load_testbench(tmp.str(), "missing", ""), Error);
}

TEST_CASE("real simulator: dff8p mismatch is detected") {
    auto path = std::string(CRUX_BINARY_DIR) + "/toolchains/verilator.json";
    ToolchainConfig tc;
    try {
        tc = load_toolchain(path);
        check_toolchain(tc);
    } catch (const Error& e) {
        MESSAGE("skipping, no simulator: " << e.what());
        return;
    }
    auto corpus = read_jsonl(testing_support::source_path("data/toy/corpus.jsonl"));
    std::string ref;
    for (const auto& r : corpus)
        if (r["id"] == "dff8p") ref = r["reference_code"];
    REQUIRE_FALSE(ref.empty());
    auto bench = load_testbench(testing_support::source_path("data/toy/testbenches").string(), "dff8p", ref);
    Verifier v(tc, 1, 20000);
    auto r = v.reference(bench);
    CHECK(r.stdout_lines.size() > 4);
    auto bug = ref;
    bug.replace(bug.find("8'h34"), 5, "8'h00");
    auto o = v.verify(bench, bug);
    CHECK(o.compile_ok);
    CHECK(o.ran_ok);
    REQUIRE(o.match_fraction);
    CHECK(*o.match_fraction < 1.0);
    CHECK(*o.match_fraction > 0.0);
    auto broken = ref;
    broken.replace(broken.find("endmodule"), 9, "endmodul");
    CHECK(v.verify(bench, broken).status == SimStatus::CompileError);
}
