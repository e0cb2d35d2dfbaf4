#pragma once
// Group-relative advantages, the token-level clipped surrogate with an
// optional k3 KL penalty, and a finite-difference check of its gradient.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "crux/reward.hpp"
#include "crux/util.hpp"

namespace crux::grpo {

using reward::TokenLogProbSeq;

struct Rollout {
    std::string crux_text;
    std::string code_text;
    TokenLogProbSeq logprobs_new;
    TokenLogProbSeq logprobs_old;
    std::optional<TokenLogProbSeq> logprobs_ref;
    reward::RewardVector reward;
};

struct RolloutGroup {
    std::string task_id;
    std::vector<Rollout> rollouts;

    std::size_t G() const { return rollouts.size(); }
};

/// Throws Error(LengthMismatch) when new/old/ref token lists differ within a rollout.
void check_invariants(const RolloutGroup& g);

struct AdvantageSet {
    std::vector<double> per_rollout;
    bool degenerate = false;
};

/// Standardizes with the population std. Below eps_std every advantage is 0.
/// Throws Error(GroupTooSmall) for fewer than two rewards.
AdvantageSet group_advantages(const std::vector<double>& rewards, double eps_std = 1e-8);

/// exp(new_t - old_t). Throws Error(LengthMismatch).
std::vector<double> importance_ratios(const TokenLogProbSeq& new_lp, const TokenLogProbSeq& old_lp);

struct ObjectiveBreakdown {
    double surrogate = 0;
    double kl_term = 0;
    double total = 0;
    double clip_fraction = 0;
    std::vector<std::vector<double>> per_token_terms; // filled only on request
};

/// Raw form over per-rollout logprob rows; `ref` may be empty when beta == 0.
ObjectiveBreakdown clipped_objective(const std::vector<std::vector<double>>& new_lp,
                                     const std::vector<std::vector<double>>& old_lp,
                                     const std::vector<std::vector<double>>& ref_lp,
                                     const std::vector<double>& advantages, double epsilon, double beta,
                                     bool keep_terms = false);

/// Throws Error(MissingRefLogprobs) when beta > 0 and a rollout lacks reference logprobs.
ObjectiveBreakdown clipped_objective(const RolloutGroup& group, const AdvantageSet& advantages,
                                     double epsilon = 0.2, double beta = 0.0, bool keep_terms = false);

json to_json(const ObjectiveBreakdown& b);

// Gradient check ---------------------------------------------------------------

/// Toy softmax policy: the new policy's logprob of token o_{i,t} is
/// logits[i][t][o_{i,t}] - logsumexp(logits[i][t]).
struct ToyInstance {
    int vocab = 0;
    std::vector<std::vector<int>> tokens;                  // [i][t]
    std::vector<std::vector<std::vector<double>>> logits;  // [i][t][v]
    std::vector<std::vector<double>> old_lp;               // [i][t]
    std::vector<std::vector<double>> ref_lp;               // [i][t]
    std::vector<double> advantages;                        // [i]
};

std::vector<std::vector<double>> toy_logprobs(const ToyInstance& inst);

/// Random instance with G rollouts of 1..max_tokens tokens. `spread` scales
/// the gap between old and new logits, and so how many tokens are clipped.
ToyInstance random_toy_instance(std::uint64_t seed, int G, int max_tokens, int vocab, double spread = 0.3);

struct GradCheckReport {
    std::size_t checked = 0;
    std::size_t excluded = 0; // logits whose token sits within reach of a clip kink
    std::size_t failures = 0; // entries outside max(1e-4, 1e-3*|g|)
    double max_abs_err = 0;
    double max_rel_err = 0;   // |a - fd| / max(|a|, |fd|, 1e-6)
    std::vector<std::string> excluded_positions;

    bool ok() const { return failures == 0; }
};

/// Analytic gradient of total = surrogate - beta*kl with respect to every logit against
/// central differences with step h.
GradCheckReport objective_gradient_check(const ToyInstance& inst, double epsilon, double beta, double h = 1e-5);

std::vector<std::vector<std::vector<double>>> analytic_gradient(const ToyInstance& inst, double epsilon, double beta);

} // namespace crux::grpo
