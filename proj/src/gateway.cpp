#include "crux/gateway.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>

#include "crux/error.hpp"

namespace crux::gateway {

void validate(const GenRequest& r) {
    if (r.n < 1) throw Error(ErrorCode::InvalidArgument, "n must be positive");
    if (!(r.temperature >= 0)) throw Error(ErrorCode::InvalidArgument, "temperature must be >= 0");
    if (!(r.top_p > 0 && r.top_p <= 1)) throw Error(ErrorCode::InvalidArgument, "top_p must be in (0, 1]");
    if (r.max_tokens < 1) throw Error(ErrorCode::InvalidArgument, "max_tokens must be positive");
}

void validate(const ScoreRequest& r) {
    if (r.continuation.empty()) throw Error(ErrorCode::InvalidArgument, "continuation must be nonempty");
}

std::string request_hash(const GenRequest& r) {
    json j = {{"kind", "generate"}, {"prompt", r.prompt},       {"n", r.n},
              {"temperature", r.temperature}, {"top_p", r.top_p}, {"max_tokens", r.max_tokens}};
    j["seed"] = r.seed ? json(*r.seed) : json(nullptr);
    return sha256_hex(j.dump());
}

std::string request_hash(const ScoreRequest& r) {
    return sha256_hex(json{{"kind", "score"}, {"prompt", r.prompt}, {"continuation", r.continuation}}.dump());
}

// Mock -----------------------------------------------------------------------

std::vector<std::string> mock_tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string w;
    while (in >> w) out.push_back(w);
    return out;
}

std::int64_t mock_token_id(const std::string& token) {
    return static_cast<std::int64_t>(stable_hash64(token) >> 33);
}

MockProvider::MockProvider(json script) : script_(std::move(script)) {
    if (!script_.is_object()) throw Error(ErrorCode::ParseError, "mock script must be a JSON object");
    seed_ = script_.value("seed", std::uint64_t{0});
}

std::unique_ptr<MockProvider> MockProvider::from_file(const std::string& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::IoError, fmt::format("mock script not found: {}", path));
    try {
        return std::make_unique<MockProvider>(json::parse(read_text_file(path)));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, fmt::format("{}: {}", path, e.what()));
    }
}

void MockProvider::maybe_fail() {
    long call = calls_++;
    if (call < script_.value("fail_first", 0L)) {
        auto kind = script_.value("failure", std::string("unreachable"));
        if (kind == "rate_limited") throw Error(ErrorCode::RateLimited, "mock: rate limited");
        throw Error(ErrorCode::ProviderUnreachable, "mock: connection refused");
    }
}

GenResult MockProvider::generate(const GenRequest& req) {
    maybe_fail();
    const json* outputs = nullptr;
    std::string mode = "cycle";
    if (script_.contains("completions")) {
        for (const auto& rule : script_.at("completions")) {
            if (req.prompt.find(rule.value("match", std::string())) != std::string::npos) {
                outputs = &rule.at("outputs");
                mode = rule.value("mode", mode);
                break;
            }
        }
    }
    if (!outputs && script_.contains("default_outputs")) outputs = &script_.at("default_outputs");
    if (!outputs || outputs->empty())
        throw Error(ErrorCode::InvalidArgument, "mock: no scripted output matches the prompt");

    const int count = std::max(0, req.n - script_.value("short_by", 0));
    GenResult res;
    Rng rng(derive_seed(seed_ ^ req.seed.value_or(0), request_hash(req)));
    for (int j = 0; j < count; ++j) {
        std::size_t idx = mode == "sample" ? rng.index(outputs->size()) : static_cast<std::size_t>(j) % outputs->size();
        res.completions.push_back(outputs->at(idx).get<std::string>());
        res.usage.completion_tokens += static_cast<long>(mock_tokenize(res.completions.back()).size());
    }
    res.usage.prompt_tokens = static_cast<long>(mock_tokenize(req.prompt).size());
    return res;
}

ScoreResult MockProvider::score(const ScoreRequest& req) {
    maybe_fail();
    if (!script_.value("logprobs_supported", true))
        throw Error(ErrorCode::LogprobsUnsupported, "mock: scoring disabled by script");
    json spec = script_.value("logprob", json::object());
    if (script_.contains("score_rules")) {
        for (const auto& rule : script_.at("score_rules")) {
            if (req.prompt.find(rule.value("match", std::string())) != std::string::npos) {
                spec = rule.value("logprob", json::object());
                break;
            }
        }
    }
    const double dflt = spec.value("default", -0.1);
    const json table = spec.value("table", json::object());
    const json positions = spec.value("positions", json::array());
    ScoreResult res;
    auto toks = mock_tokenize(req.continuation);
    for (std::size_t t = 0; t < toks.size(); ++t) {
        double lp = dflt;
        if (t < positions.size()) lp = positions[t].get<double>();
        else if (table.contains(toks[t])) lp = table.at(toks[t]).get<double>();
        res.seq.tokens.push_back(mock_token_id(toks[t]));
        res.seq.logprobs.push_back(lp);
    }
    reward::check_invariants(res.seq);
    res.usage.prompt_tokens = static_cast<long>(mock_tokenize(req.prompt).size() + toks.size());
    return res;
}

// HTTP -----------------------------------------------------------------------

HttpProvider::HttpProvider(HttpConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty()) throw Error(ErrorCode::InvalidArgument, "http provider needs base_url");
}

json HttpProvider::post(const json& body) {
    httplib::Client cli(cfg_.base_url);
    const auto secs = cfg_.timeout_ms / 1000, usecs = (cfg_.timeout_ms % 1000) * 1000;
    cli.set_connection_timeout(secs, usecs);
    cli.set_read_timeout(secs, usecs);
    httplib::Headers headers;
    if (!cfg_.api_key_env.empty()) {
        if (const char* key = std::getenv(cfg_.api_key_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = cli.Post("/v1/completions", headers, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::ProviderUnreachable, fmt::format("{}: {}", cfg_.base_url, httplib::to_string(res.error())));
    if (res->status == 429) throw Error(ErrorCode::RateLimited, "HTTP 429");
    if (res->status >= 500) throw Error(ErrorCode::ProviderUnreachable, fmt::format("HTTP {}", res->status));
    if (res->status != 200)
        throw Error(ErrorCode::InvalidArgument, fmt::format("HTTP {}: {}", res->status, res->body.substr(0, 500)));
    try {
        return json::parse(res->body);
    } catch (const json::exception&) {
        throw Error(ErrorCode::TruncatedResponse, "response body is not JSON");
    }
}

namespace {

Usage usage_from(const json& body) {
    Usage u;
    if (body.contains("usage") && body["usage"].is_object()) {
        u.prompt_tokens = body["usage"].value("prompt_tokens", 0L);
        u.completion_tokens = body["usage"].value("completion_tokens", 0L);
    }
    return u;
}

} // namespace

GenResult HttpProvider::generate(const GenRequest& req) {
    json body = {{"model", cfg_.model},           {"prompt", req.prompt}, {"n", req.n},
                 {"temperature", req.temperature}, {"top_p", req.top_p},   {"max_tokens", req.max_tokens}};
    if (req.seed) body["seed"] = *req.seed;
    auto resp = post(body);
    GenResult res;
    if (!resp.contains("choices") || !resp["choices"].is_array())
        throw Error(ErrorCode::TruncatedResponse, "response has no choices");
    for (const auto& c : resp["choices"]) res.completions.push_back(c.value("text", std::string()));
    res.usage = usage_from(resp);
    return res;
}

ScoreResult continuation_logprobs(const json& lp, std::size_t prompt_chars, std::size_t total_chars) {
    if (!lp.is_object() || !lp.contains("token_logprobs") || !lp.contains("text_offset"))
        throw Error(ErrorCode::LogprobsUnsupported, "provider returned no echoed logprobs");
    const auto& offsets = lp["text_offset"];
    const auto& lps = lp["token_logprobs"];
    const json tokens = lp.value("tokens", json::array());
    if (offsets.size() != lps.size()) throw Error(ErrorCode::TokenizationMismatch, "offsets and logprobs differ in length");
    std::size_t first = offsets.size();
    for (std::size_t i = 0; i < offsets.size(); ++i) {
        if (offsets[i].get<std::size_t>() >= prompt_chars) {
            first = i;
            break;
        }
    }
    if (first == offsets.size() || offsets[first].get<std::size_t>() != prompt_chars)
        throw Error(ErrorCode::TokenizationMismatch,
                    fmt::format("no token starts at the continuation boundary (offset {})", prompt_chars));
    if (first == 0) throw Error(ErrorCode::TokenizationMismatch, "continuation token has no context");
    ScoreResult res;
    for (std::size_t i = first; i < lps.size(); ++i) {
        if (offsets[i].get<std::size_t>() >= total_chars) break;
        if (lps[i].is_null()) throw Error(ErrorCode::LogprobsUnsupported, fmt::format("token {} has no logprob", i));
        res.seq.logprobs.push_back(std::min(0.0, lps[i].get<double>()));
        res.seq.tokens.push_back(i < tokens.size() && tokens[i].is_string() ? mock_token_id(tokens[i].get<std::string>())
                                                                            : 0);
    }
    return res;
}

ScoreResult HttpProvider::score(const ScoreRequest& req) {
    json body = {{"model", cfg_.model}, {"prompt", req.prompt + req.continuation}, {"max_tokens", 0},
                 {"echo", true},        {"logprobs", 1},                           {"temperature", 0}};
    auto resp = post(body);
    if (!resp.contains("choices") || resp["choices"].empty())
        throw Error(ErrorCode::TruncatedResponse, "response has no choices");
    auto res = continuation_logprobs(resp["choices"][0].value("logprobs", json()), req.prompt.size(),
                                     req.prompt.size() + req.continuation.size());
    res.usage = usage_from(resp);
    return res;
}

// Config -----------------------------------------------------------------------

ProviderConfig provider_config_from_json(const json& j) {
    ProviderConfig c;
    try {
        c.kind = j.value("kind", c.kind);
        c.mock_script = j.value("mock_script", "");
        c.http.base_url = j.value("base_url", "");
        c.http.model = j.value("model", "");
        c.http.api_key_env = j.value("api_key_env", "");
        c.http.timeout_ms = j.value("timeout_ms", c.http.timeout_ms);
        if (j.contains("retry")) {
            const auto& r = j.at("retry");
            c.retry.attempts = r.value("attempts", c.retry.attempts);
            c.retry.backoff_ms = r.value("backoff_ms", c.retry.backoff_ms);
            c.retry.multiplier = r.value("multiplier", c.retry.multiplier);
        }
        c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
        c.score_template = j.value("score_template", c.score_template);
        c.audit_path = j.value("audit_path", "");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("provider config: ") + e.what());
    }
    if (c.kind != "mock" && c.kind != "http") throw Error(ErrorCode::ParseError, "provider kind must be mock or http");
    if (c.retry.attempts < 1) throw Error(ErrorCode::ParseError, "retry.attempts must be >= 1");
    if (c.max_in_flight < 1 || c.max_in_flight > 1024) throw Error(ErrorCode::ParseError, "max_in_flight must be in [1, 1024]");
    return c;
}

std::unique_ptr<Provider> make_provider(const ProviderConfig& cfg) {
    if (cfg.kind == "mock") return MockProvider::from_file(cfg.mock_script);
    return std::make_unique<HttpProvider>(cfg.http);
}

std::string render_score_prompt(const std::string& tmpl, const std::string& realspec, const std::string& crux) {
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl.compare(i, 10, "{realspec}") == 0) {
            out += realspec;
            i += 10;
        } else if (tmpl.compare(i, 6, "{crux}") == 0) {
            out += crux;
            i += 6;
        } else {
            out += tmpl[i++];
        }
    }
    return out;
}

// Client -----------------------------------------------------------------------

namespace {

thread_local int t_last_attempts = 0;

std::string now_iso() {
    auto now = std::chrono::system_clock::now();
    auto t = std::chrono::system_clock::to_time_t(now);
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:03}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                       tm.tm_hour, tm.tm_min, tm.tm_sec, ms);
}

bool transient(ErrorCode c) { return c == ErrorCode::ProviderUnreachable || c == ErrorCode::RateLimited; }

} // namespace

GatewayClient::GatewayClient(std::shared_ptr<Provider> provider, RetryPolicy retry, std::size_t max_in_flight,
                             std::string audit_path, Sleeper sleeper)
    : provider_(std::move(provider)), retry_(retry),
      slots_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(max_in_flight, 1, 1024))),
      audit_path_(std::move(audit_path)), sleeper_(std::move(sleeper)) {
    if (!provider_) throw Error(ErrorCode::InvalidArgument, "no provider");
    if (retry_.attempts < 1) throw Error(ErrorCode::InvalidArgument, "retry attempts must be >= 1");
    if (!sleeper_) sleeper_ = [](long ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
}

int GatewayClient::last_attempts() const { return t_last_attempts; }

void GatewayClient::audit(const json& row) {
    if (audit_path_.empty()) return;
    std::lock_guard lock(audit_mu_);
    std::ofstream out(audit_path_, std::ios::app);
    if (!out) throw Error(ErrorCode::IoError, fmt::format("cannot open audit log {}", audit_path_));
    out << row.dump() << "\n";
}

template <class F>
auto GatewayClient::with_retry(const std::string& kind, const std::string& hash, F&& call) {
    slots_.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{slots_};

    const std::string started = now_iso();
    long backoff = retry_.backoff_ms;
    for (int attempt = 1;; ++attempt) {
        t_last_attempts = attempt;
        try {
            auto result = call();
            audit({{"request_hash", hash},
                   {"kind", kind},
                   {"started_at", started},
                   {"finished_at", now_iso()},
                   {"attempts", attempt},
                   {"status", "ok"},
                   {"usage", {{"prompt_tokens", result.usage.prompt_tokens},
                              {"completion_tokens", result.usage.completion_tokens}}}});
            return result;
        } catch (const Error& e) {
            if (!transient(e.code()) || attempt >= retry_.attempts) {
                audit({{"request_hash", hash},
                       {"kind", kind},
                       {"started_at", started},
                       {"finished_at", now_iso()},
                       {"attempts", attempt},
                       {"status", std::string(to_string(e.code()))},
                       {"error", e.what()}});
                throw;
            }
            sleeper_(backoff);
            backoff = static_cast<long>(std::llround(static_cast<double>(backoff) * retry_.multiplier));
        }
    }
}

std::vector<std::string> GatewayClient::generate(const GenRequest& req) {
    validate(req);
    auto res = with_retry("generate", request_hash(req), [&] {
        auto r = provider_->generate(req);
        if (static_cast<int>(r.completions.size()) != req.n)
            throw Error(ErrorCode::TruncatedResponse,
                        fmt::format("asked for {} completions, got {}", req.n, r.completions.size()));
        return r;
    });
    return std::move(res.completions);
}

TokenLogProbSeq GatewayClient::score(const ScoreRequest& req) {
    validate(req);
    auto res = with_retry("score", request_hash(req), [&] { return provider_->score(req); });
    return std::move(res.seq);
}

} // namespace crux::gateway
