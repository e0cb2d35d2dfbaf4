#pragma once
// Format, Compile, Code and CRUX rewards and their scheduled mixture.

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "crux/util.hpp"
#include "crux/verification.hpp"
#include "crux/verilog_interface.hpp"

namespace crux::reward {

struct TokenLogProbSeq {
    std::vector<std::int64_t> tokens;
    std::vector<double> logprobs;

    std::size_t size() const { return logprobs.size(); }
};

/// Throws Error(LengthMismatch) / Error(InvalidArgument) when the invariants fail.
void check_invariants(const TokenLogProbSeq& s);

json to_json(const TokenLogProbSeq& s);
TokenLogProbSeq token_seq_from_json(const json& j);

/// Four equal checks: all three section headers, a parsable interface, no
/// mismatch against `ref_iface`, nonempty Core Functions.
double format_reward(const std::string& crux_text, const verilog::ModuleInterface& ref_iface);

double compile_reward(const verify::SimOutcome& outcome);
double code_reward(const verify::SimOutcome& outcome);

/// exp(mean logprob). Throws Error(EmptySequence) for an empty sequence.
double crux_reward(const TokenLogProbSeq& ref_code_logprobs);

struct CruxRewardResult {
    double value = 0.0;
    std::string diagnostic; // nonempty when the score could not be computed
};

/// Batch-safe form: a missing or empty score yields 0 and a diagnostic.
CruxRewardResult crux_reward_or_zero(const std::optional<TokenLogProbSeq>& ref_code_logprobs);

using Weights = std::array<double, 4>; // format, compile, crux, code

struct WeightSchedule {
    Weights early{1, 3, 4, 6};
    Weights late{0.5, 1.5, 4, 8};
    double switch_fraction = 0.1;
    long steps_per_epoch = 1;

    long switch_step() const;
    /// 0 before the switch step, 1 from it on.
    int phase(long global_step) const;
    const Weights& weights(long global_step) const;
};

/// Throws Error(InvalidArgument) on negative weights, a fraction outside
/// (0, 1), or non-positive steps_per_epoch.
void check_invariants(const WeightSchedule& s);
json to_json(const WeightSchedule& s);
WeightSchedule weight_schedule_from_json(const json& j);

double mix(const Weights& parts, const WeightSchedule& schedule, long global_step);

struct RewardVector {
    double format_r = 0;
    double compile_r = 0;
    double crux_r = 0;
    double code_r = 0;
    double mixed = 0;
    int weights_phase = 0;

    Weights parts() const { return {format_r, compile_r, crux_r, code_r}; }
};

RewardVector make_reward_vector(double format_r, double compile_r, double crux_r, double code_r,
                                const WeightSchedule& schedule, long global_step);

json to_json(const RewardVector& r);
RewardVector reward_vector_from_json(const json& j);

} // namespace crux::reward
