#include <doctest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include <httplib.h>

#include "crux/error.hpp"
#include "crux/gateway.hpp"
#include "crux/util.hpp"
#include "test_support.hpp"

using namespace crux;
using namespace crux::gateway;
using testing_support::TempDir;

namespace {

std::shared_ptr<MockProvider> mock(json script) { return std::make_shared<MockProvider>(std::move(script)); }

GatewayClient client(std::shared_ptr<Provider> p, std::string audit = "", std::vector<long>* sleeps = nullptr) {
    return GatewayClient(std::move(p), {3, 500, 2.0}, 8, std::move(audit), [sleeps](long ms) {
        if (sleeps) sleeps->push_back(ms);
    });
}

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error thrown");
    return ErrorCode::InvalidArgument;
}

// Minimal completions server for HttpProvider tests.
struct FakeServer {
    httplib::Server srv;
    std::thread th;
    int port = 0;
    std::atomic<int> hits{0};
    int status = 200;
    std::string body;

    FakeServer() {
        srv.Post("/v1/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            last_request = json::parse(req.body);
            res.status = status;
            res.set_content(body, "application/json");
        });
        port = srv.bind_to_any_port("127.0.0.1");
        th = std::thread([this] { srv.listen_after_bind(); });
        srv.wait_until_ready();
    }
    ~FakeServer() {
        srv.stop();
        th.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
    json last_request;
};

} // namespace

TEST_CASE("mock returns canned completions verbatim") {
    auto c = client(mock({{"completions", {{{"match", "adder"}, {"outputs", {"one", "two"}}}}}, {"default_outputs", {"d"}}}));
    auto out = c.generate({"an adder please", 5});
    CHECK(out == std::vector<std::string>{"one", "two", "one", "two", "one"});
    CHECK(c.generate({"other", 2}) == std::vector<std::string>{"d", "d"});
}

TEST_CASE("sample mode is deterministic under seeds") {
    json script = {{"seed", 4}, {"completions", {{{"match", ""}, {"outputs", {"a", "b", "c", "d"}}, {"mode", "sample"}}}}};
    auto c1 = client(mock(script));
    auto c2 = client(mock(script));
    GenRequest req{"p", 20, 1.0, 0.99, 100, 7};
    CHECK(c1.generate(req) == c2.generate(req));
    auto other = req;
    other.seed = 8;
    CHECK(c1.generate(req) != c1.generate(other));
}

TEST_CASE("retry: fail twice then succeed, logged") {
    TempDir tmp;
    std::vector<long> sleeps;
    auto c = client(mock({{"fail_first", 2}, {"default_outputs", {"x"}}}), tmp.str("audit.jsonl"), &sleeps);
    auto out = c.generate({"p", 1});
    CHECK(out == std::vector<std::string>{"x"});
    CHECK(c.last_attempts() == 3);
    CHECK(sleeps == std::vector<long>{500, 1000});
    auto rows = read_jsonl(tmp.path() / "audit.jsonl");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0]["attempts"] == 3);
    CHECK(rows[0]["status"] == "ok");
    CHECK(rows[0]["request_hash"] == request_hash(GenRequest{"p", 1}));
    CHECK(rows[0].contains("started_at"));
    CHECK(rows[0]["usage"]["completion_tokens"] == 1);
}

TEST_CASE("retry: exhausted attempts surface the typed error") {
    TempDir tmp;
    auto c = client(mock({{"fail_first", 5}, {"failure", "rate_limited"}, {"default_outputs", {"x"}}}), tmp.str("a.jsonl"));
    CHECK(code_of([&] { c.generate({"p", 1}); }) == ErrorCode::RateLimited);
    CHECK(c.last_attempts() == 3);
    auto rows = read_jsonl(tmp.path() / "a.jsonl");
    CHECK(rows.back()["status"] == "RateLimited");
    auto u = client(mock({{"fail_first", 5}, {"default_outputs", {"x"}}}));
    CHECK(code_of([&] { u.generate({"p", 1}); }) == ErrorCode::ProviderUnreachable);
}

TEST_CASE("short responses are truncation errors") {
    auto c = client(mock({{"short_by", 1}, {"default_outputs", {"x"}}}));
    CHECK(code_of([&] { c.generate({"p", 5}); }) == ErrorCode::TruncatedResponse);
    CHECK(c.last_attempts() == 1);
}

TEST_CASE("request validation") {
    auto c = client(mock({{"default_outputs", {"x"}}}));
    CHECK(code_of([&] { c.generate({"p", 0}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { c.generate({"p", 1, -1.0}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { c.generate({"p", 1, 1.0, 1.5}); }) == ErrorCode::InvalidArgument);
    CHECK(code_of([&] { c.score({"p", ""}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("mock scoring") {
    auto half = client(mock({{"logprob", {{"default", std::log(0.5)}}}}));
    auto s = half.score({"prompt text", "a b c d"});
    REQUIRE(s.logprobs.size() == 4);
    for (double lp : s.logprobs) CHECK(lp == std::log(0.5));
    CHECK(reward::crux_reward(s) == doctest::Approx(0.5).epsilon(1e-15));

    auto table = client(mock({{"logprob", {{"default", -1.0}, {"table", {{"assign", -0.01}, {"end", -0.2}}}}}}));
    auto t = table.score({"p", "assign x end y"});
    CHECK(t.logprobs == std::vector<double>{-0.01, -1.0, -0.2, -1.0});
    CHECK(t.tokens[0] == mock_token_id("assign"));

    // lengthening the prompt never changes L
    CHECK(table.score({"p p p p p p", "assign x end y"}).logprobs.size() == 4);

    auto rules = client(mock({{"score_rules", {{{"match", "XYZ"}, {"logprob", {{"positions", {-0.3, -0.4}}}}}}}}));
    CHECK(rules.score({"has XYZ", "a b c"}).logprobs == std::vector<double>{-0.3, -0.4, -0.1});
    CHECK(rules.score({"plain", "a b"}).logprobs == std::vector<double>{-0.1, -0.1});

    auto off = client(mock({{"logprobs_supported", false}}));
    CHECK(code_of([&] { off.score({"p", "a"}); }) == ErrorCode::LogprobsUnsupported);
}

TEST_CASE("continuation logprob alignment") {
    json lp = {{"tokens", {"He", "llo", " wor", "ld"}}, {"token_logprobs", {nullptr, -0.5, -0.25, -0.125}},
               {"text_offset", {0, 2, 5, 9}}};
    auto r = continuation_logprobs(lp, 5, 11);
    CHECK(r.seq.logprobs == std::vector<double>{-0.25, -0.125});
    CHECK(code_of([&] { continuation_logprobs(lp, 4, 11); }) == ErrorCode::TokenizationMismatch);
    CHECK(code_of([&] { continuation_logprobs(lp, 0, 11); }) == ErrorCode::TokenizationMismatch);
    CHECK(code_of([&] { continuation_logprobs(json::object(), 5, 11); }) == ErrorCode::LogprobsUnsupported);
    json pos = lp;
    pos["token_logprobs"][3] = 1e-9; // rounding noise above zero is clamped
    CHECK(continuation_logprobs(pos, 5, 11).seq.logprobs.back() == 0.0);
}

TEST_CASE("http provider: generate and score") {
    FakeServer s;
    s.body = R"({"choices": [{"text": "A"}, {"text": "B"}], "usage": {"prompt_tokens": 3, "completion_tokens": 2}})";
    HttpProvider p({s.url(), "policy-7b", "", 5000});
    auto g = p.generate({"hello", 2, 1.0, 0.99, 64, 9});
    CHECK(g.completions == std::vector<std::string>{"A", "B"});
    CHECK(g.usage.prompt_tokens == 3);
    CHECK(s.last_request["model"] == "policy-7b");
    CHECK(s.last_request["n"] == 2);
    CHECK(s.last_request["seed"] == 9);

    s.body = R"({"choices": [{"logprobs": {"tokens": ["ab", "cd", "ef"], "token_logprobs": [null, -0.5, -0.75],
                 "text_offset": [0, 2, 4]}}]})";
    auto sc = p.score({"ab", "cdef"});
    CHECK(sc.seq.logprobs == std::vector<double>{-0.5, -0.75});
    CHECK(s.last_request["echo"] == true);
    CHECK(s.last_request["prompt"] == "abcdef");
    CHECK(s.last_request["max_tokens"] == 0);
}

TEST_CASE("http provider: status mapping") {
    FakeServer s;
    HttpProvider p({s.url(), "m", "", 5000});
    s.status = 429;
    s.body = "{}";
    CHECK(code_of([&] { p.generate({"x", 1}); }) == ErrorCode::RateLimited);
    s.status = 503;
    CHECK(code_of([&] { p.generate({"x", 1}); }) == ErrorCode::ProviderUnreachable);
    s.status = 400;
    CHECK(code_of([&] { p.generate({"x", 1}); }) == ErrorCode::InvalidArgument);
    s.status = 200;
    s.body = "not json";
    CHECK(code_of([&] { p.generate({"x", 1}); }) == ErrorCode::TruncatedResponse);

    HttpProvider dead({"http://127.0.0.1:1", "m", "", 500});
    CHECK(code_of([&] { dead.generate({"x", 1}); }) == ErrorCode::ProviderUnreachable);
}

TEST_CASE("client bounds in-flight requests") {
    struct Slow : Provider {
        std::atomic<int> now{0}, peak{0};
        std::string name() const override { return "slow"; }
        GenResult generate(const GenRequest& req) override {
            int n = ++now;
            int p = peak.load();
            while (n > p && !peak.compare_exchange_weak(p, n)) {}
            std::this_thread::sleep_for(std::chrono::milliseconds(20));
            --now;
            return {std::vector<std::string>(req.n, "x"), {}};
        }
        ScoreResult score(const ScoreRequest&) override { return {}; }
    };
    auto slow = std::make_shared<Slow>();
    GatewayClient c(slow, {}, 3);
    {
        std::vector<std::jthread> ts;
        for (int i = 0; i < 12; ++i) ts.emplace_back([&] { c.generate({"p", 1}); });
    }
    CHECK(slow->peak.load() <= 3);
    CHECK(slow->peak.load() >= 2);
}

TEST_CASE("provider config") {
    auto c = provider_config_from_json({{"kind", "http"}, {"base_url", "http://x"}, {"model", "m"},
                                        {"retry", {{"attempts", 5}}}, {"max_in_flight", 2}});
    CHECK(c.kind == "http");
    CHECK(c.retry.attempts == 5);
    CHECK(c.max_in_flight == 2);
    CHECK_THROWS_AS(provider_config_from_json({{"kind", "grpc"}}), Error);
    CHECK_THROWS_AS(provider_config_from_json({{"retry", {{"attempts", 0}}}}), Error);
    CHECK(render_score_prompt("{realspec}|{crux}|{x}", "R", "C") == "R|C|{x}");
    CHECK(code_of([] { MockProvider::from_file("/nonexistent.json"); }) == ErrorCode::IoError);
}

TEST_CASE("request hashes") {
    CHECK(request_hash(GenRequest{"a", 1}) == request_hash(GenRequest{"a", 1}));
    CHECK(request_hash(GenRequest{"a", 1}) != request_hash(GenRequest{"a", 2}));
    CHECK(request_hash(ScoreRequest{"a", "b"}) != request_hash(ScoreRequest{"ab", ""}));
    CHECK(mock_tokenize("  a\tb\nc ") == std::vector<std::string>{"a", "b", "c"});
}
