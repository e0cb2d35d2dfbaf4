#pragma once
// Access to text-generation services: sampling rollouts and scoring the
// log-probabilities of a fixed continuation. Tokenization belongs to the
// provider.

#include <atomic>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include "crux/reward.hpp"
#include "crux/util.hpp"

namespace crux::gateway {

using reward::TokenLogProbSeq;

struct GenRequest {
    std::string prompt;
    int n = 5;
    double temperature = 1.0;
    double top_p = 0.99;
    int max_tokens = 4096;
    std::optional<std::uint64_t> seed;
};

struct ScoreRequest {
    std::string prompt;
    std::string continuation;
};

/// Throws Error(InvalidArgument) on out-of-range fields or an empty continuation.
void validate(const GenRequest& r);
void validate(const ScoreRequest& r);

std::string request_hash(const GenRequest& r);
std::string request_hash(const ScoreRequest& r);

struct Usage {
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

struct GenResult {
    std::vector<std::string> completions;
    Usage usage;
};

struct ScoreResult {
    TokenLogProbSeq seq;
    Usage usage;
};

/// Single attempt, no retries. Transient failures throw Error(ProviderUnreachable)
/// or Error(RateLimited).
class Provider {
public:
    virtual ~Provider() = default;
    virtual std::string name() const = 0;
    virtual GenResult generate(const GenRequest& req) = 0;
    virtual ScoreResult score(const ScoreRequest& req) = 0;
};

/// Deterministic scripted provider. Script keys (all optional):
///   seed              integer, default 0
///   completions       [{"match": substring, "outputs": [...], "mode": "cycle"|"sample"}]
///   default_outputs   outputs when no rule matches
///   logprob           {"default": x, "table": {token: x}, "positions": [x...]}
///   score_rules       [{"match": substring of the prompt, "logprob": {...}}]
///   fail_first        the first N calls fail
///   failure           "unreachable" | "rate_limited"
///   short_by          return this many completions fewer than requested
///   logprobs_supported  false makes score() throw LogprobsUnsupported
/// Tokens are whitespace-separated words of the continuation.
class MockProvider : public Provider {
public:
    explicit MockProvider(json script);
    static std::unique_ptr<MockProvider> from_file(const std::string& path);

    std::string name() const override { return "mock"; }
    GenResult generate(const GenRequest& req) override;
    ScoreResult score(const ScoreRequest& req) override;

    long calls() const { return calls_.load(); }

private:
    void maybe_fail();

    json script_;
    std::uint64_t seed_ = 0;
    std::atomic<long> calls_{0};
};

/// Whitespace tokenization used by the mock; ids are stable hashes of the words.
std::vector<std::string> mock_tokenize(const std::string& text);
std::int64_t mock_token_id(const std::string& token);

struct HttpConfig {
    std::string base_url;         // e.g. http://localhost:8000
    std::string model;
    std::string api_key_env;      // name of the env var holding a bearer token; may be empty
    long timeout_ms = 60000;
};

/// Completions-style HTTP API: POST /v1/completions; scoring uses echo + logprobs.
class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpConfig cfg);

    std::string name() const override { return "http:" + cfg_.model; }
    GenResult generate(const GenRequest& req) override;
    ScoreResult score(const ScoreRequest& req) override;

private:
    json post(const json& body);

    HttpConfig cfg_;
};

/// Maps a provider's echoed prompt+continuation logprobs onto the continuation.
/// Throws Error(TokenizationMismatch) when no token starts exactly at `prompt_chars`,
/// Error(LogprobsUnsupported) when the payload has no logprobs.
ScoreResult continuation_logprobs(const json& choice_logprobs, std::size_t prompt_chars, std::size_t total_chars);

struct RetryPolicy {
    int attempts = 3;
    long backoff_ms = 500;
    double multiplier = 2.0;
};

struct ProviderConfig {
    std::string kind = "mock"; // "mock" or "http"
    std::string mock_script;   // path, for kind == "mock"
    HttpConfig http;
    RetryPolicy retry;
    std::size_t max_in_flight = 8;
    std::string score_template = "{realspec}\n\n{crux}\n\n";
    std::string audit_path; // empty disables the audit log
};

ProviderConfig provider_config_from_json(const json& j);
std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg);

/// Substitutes {realspec} and {crux}.
std::string render_score_prompt(const std::string& tmpl, const std::string& realspec, const std::string& crux);

class GatewayClient {
public:
    using Sleeper = std::function<void(long ms)>;

    GatewayClient(std::shared_ptr<Provider> provider, RetryPolicy retry = {}, std::size_t max_in_flight = 8,
                  std::string audit_path = "", Sleeper sleeper = {});

    /// Exactly req.n completions; Error(TruncatedResponse) otherwise.
    std::vector<std::string> generate(const GenRequest& req);
    TokenLogProbSeq score(const ScoreRequest& req);

    /// Attempts used by the most recent call on this thread.
    int last_attempts() const;

private:
    template <class F>
    auto with_retry(const std::string& kind, const std::string& hash, F&& call);
    void audit(const json& row);

    std::shared_ptr<Provider> provider_;
    RetryPolicy retry_;
    std::counting_semaphore<1024> slots_;
    std::string audit_path_;
    Sleeper sleeper_;
    std::mutex audit_mu_;
};

} // namespace crux::gateway
