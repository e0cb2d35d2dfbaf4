#include "crux/reward.hpp"

#include <cmath>

#include <fmt/format.h>

#include "crux/crux_document.hpp"
#include "crux/error.hpp"

namespace crux::reward {

void check_invariants(const TokenLogProbSeq& s) {
    if (s.tokens.size() != s.logprobs.size())
        throw Error(ErrorCode::LengthMismatch,
                    fmt::format("{} tokens but {} logprobs", s.tokens.size(), s.logprobs.size()));
    for (std::size_t i = 0; i < s.logprobs.size(); ++i)
        if (!(s.logprobs[i] <= 0.0))
            throw Error(ErrorCode::InvalidArgument, fmt::format("logprob {} at position {} is not <= 0", s.logprobs[i], i));
}

json to_json(const TokenLogProbSeq& s) { return {{"tokens", s.tokens}, {"logprobs", s.logprobs}}; }

TokenLogProbSeq token_seq_from_json(const json& j) {
    TokenLogProbSeq s;
    try {
        s.logprobs = j.at("logprobs").get<std::vector<double>>();
        if (j.contains("tokens")) s.tokens = j.at("tokens").get<std::vector<std::int64_t>>();
        else s.tokens.assign(s.logprobs.size(), 0);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("token sequence: ") + e.what());
    }
    check_invariants(s);
    return s;
}

double format_reward(const std::string& crux_text, const verilog::ModuleInterface& ref_iface) {
    auto report = doc::parse_crux(crux_text);
    int passed = 0;
    if (report.sections_found.size() == 3) ++passed;
    if (report.interface) {
        ++passed;
        doc::CruxDoc probe;
        probe.interface = *report.interface;
        if (doc::validate_against_reference(probe, ref_iface).empty()) ++passed;
    }
    if (!report.core_functions.empty()) ++passed;
    return passed / 4.0;
}

double compile_reward(const verify::SimOutcome& outcome) { return outcome.compile_ok ? 1.0 : 0.0; }

double code_reward(const verify::SimOutcome& outcome) { return outcome.match_fraction.value_or(0.0); }

double crux_reward(const TokenLogProbSeq& s) {
    if (s.logprobs.empty()) throw Error(ErrorCode::EmptySequence, "no reference-code tokens to score");
    // A plain sum keeps the result monotone in every logprob under rounding.
    double sum = 0.0;
    for (double lp : s.logprobs) sum += lp;
    return std::exp(sum / static_cast<double>(s.logprobs.size()));
}

CruxRewardResult crux_reward_or_zero(const std::optional<TokenLogProbSeq>& s) {
    if (!s) return {0.0, "reference code could not be scored (no logprobs)"};
    if (s->logprobs.empty()) return {0.0, "reference code scored to an empty token sequence"};
    return {crux_reward(*s), ""};
}

long WeightSchedule::switch_step() const {
    // The epsilon keeps products like 0.1 * 520 from flooring to 51.
    return static_cast<long>(std::floor(switch_fraction * static_cast<double>(steps_per_epoch) + 1e-9));
}

int WeightSchedule::phase(long global_step) const { return global_step < switch_step() ? 0 : 1; }

const Weights& WeightSchedule::weights(long global_step) const { return phase(global_step) == 0 ? early : late; }

void check_invariants(const WeightSchedule& s) {
    for (const auto* w : {&s.early, &s.late})
        for (double x : *w)
            if (!(x >= 0.0)) throw Error(ErrorCode::InvalidArgument, "reward weights must be >= 0");
    if (!(s.switch_fraction > 0.0 && s.switch_fraction < 1.0))
        throw Error(ErrorCode::InvalidArgument, "switch_fraction must be in (0, 1)");
    if (s.steps_per_epoch <= 0) throw Error(ErrorCode::InvalidArgument, "steps_per_epoch must be positive");
}

json to_json(const WeightSchedule& s) {
    return {{"early", s.early},
            {"late", s.late},
            {"switch_fraction", s.switch_fraction},
            {"steps_per_epoch", s.steps_per_epoch}};
}

WeightSchedule weight_schedule_from_json(const json& j) {
    WeightSchedule s;
    try {
        if (j.contains("early")) s.early = j.at("early").get<Weights>();
        if (j.contains("late")) s.late = j.at("late").get<Weights>();
        s.switch_fraction = j.value("switch_fraction", s.switch_fraction);
        s.steps_per_epoch = j.value("steps_per_epoch", s.steps_per_epoch);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("weight schedule: ") + e.what());
    }
    check_invariants(s);
    return s;
}

double mix(const Weights& parts, const WeightSchedule& schedule, long global_step) {
    if (global_step < 0) throw Error(ErrorCode::InvalidArgument, "global_step must be >= 0");
    const auto& w = schedule.weights(global_step);
    double out = 0.0;
    for (std::size_t i = 0; i < 4; ++i) out += w[i] * parts[i];
    return out;
}

RewardVector make_reward_vector(double format_r, double compile_r, double crux_r, double code_r,
                                const WeightSchedule& schedule, long global_step) {
    RewardVector r{format_r, compile_r, crux_r, code_r, 0.0, schedule.phase(global_step)};
    r.mixed = mix(r.parts(), schedule, global_step);
    return r;
}

json to_json(const RewardVector& r) {
    return {{"format_r", r.format_r}, {"compile_r", r.compile_r}, {"crux_r", r.crux_r},
            {"code_r", r.code_r},     {"mixed", r.mixed},         {"weights_phase", r.weights_phase == 0 ? "early" : "late"}};
}

RewardVector reward_vector_from_json(const json& j) {
    RewardVector r;
    try {
        r.format_r = j.at("format_r").get<double>();
        r.compile_r = j.at("compile_r").get<double>();
        r.crux_r = j.at("crux_r").get<double>();
        r.code_r = j.at("code_r").get<double>();
        r.mixed = j.at("mixed").get<double>();
        r.weights_phase = j.value("weights_phase", "early") == "early" ? 0 : 1;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("reward vector: ") + e.what());
    }
    return r;
}

} // namespace crux::reward
