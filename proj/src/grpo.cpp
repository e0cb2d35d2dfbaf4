#include "crux/grpo.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "crux/error.hpp"

namespace crux::grpo {

void check_invariants(const RolloutGroup& g) {
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
        const auto& r = g.rollouts[i];
        reward::check_invariants(r.logprobs_new);
        reward::check_invariants(r.logprobs_old);
        if (r.logprobs_new.tokens != r.logprobs_old.tokens)
            throw Error(ErrorCode::LengthMismatch, fmt::format("rollout {}: new/old token lists differ", i));
        if (r.logprobs_ref) {
            reward::check_invariants(*r.logprobs_ref);
            if (r.logprobs_ref->tokens != r.logprobs_new.tokens)
                throw Error(ErrorCode::LengthMismatch, fmt::format("rollout {}: ref token list differs", i));
        }
    }
}

AdvantageSet group_advantages(const std::vector<double>& rewards, double eps_std) {
    if (rewards.size() < 2)
        throw Error(ErrorCode::GroupTooSmall, fmt::format("need at least 2 rewards, got {}", rewards.size()));
    if (!(eps_std > 0)) throw Error(ErrorCode::InvalidArgument, "eps_std must be positive");
    for (double r : rewards)
        if (!std::isfinite(r)) throw Error(ErrorCode::InvalidArgument, "non-finite reward");
    const double n = static_cast<double>(rewards.size());
    // Work on deviations from the first reward so a common shift cancels exactly.
    const double pivot = rewards[0];
    std::vector<double> d(rewards.size());
    double sum = 0;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        d[i] = rewards[i] - pivot;
        sum += d[i];
    }
    const double mean = sum / n;
    double ss = 0;
    for (double x : d) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / n);
    AdvantageSet out;
    out.per_rollout.assign(rewards.size(), 0.0);
    if (sd < eps_std) {
        out.degenerate = true;
        return out;
    }
    for (std::size_t i = 0; i < d.size(); ++i) out.per_rollout[i] = (d[i] - mean) / sd;
    return out;
}

std::vector<double> importance_ratios(const TokenLogProbSeq& new_lp, const TokenLogProbSeq& old_lp) {
    if (new_lp.logprobs.size() != old_lp.logprobs.size() || new_lp.tokens != old_lp.tokens)
        throw Error(ErrorCode::LengthMismatch,
                    fmt::format("new has {} tokens, old has {}", new_lp.logprobs.size(), old_lp.logprobs.size()));
    std::vector<double> out(new_lp.logprobs.size());
    for (std::size_t t = 0; t < out.size(); ++t) out[t] = std::exp(new_lp.logprobs[t] - old_lp.logprobs[t]);
    return out;
}

ObjectiveBreakdown clipped_objective(const std::vector<std::vector<double>>& new_lp,
                                     const std::vector<std::vector<double>>& old_lp,
                                     const std::vector<std::vector<double>>& ref_lp,
                                     const std::vector<double>& advantages, double epsilon, double beta,
                                     bool keep_terms) {
    const std::size_t G = new_lp.size();
    if (G == 0) throw Error(ErrorCode::GroupTooSmall, "empty group");
    if (old_lp.size() != G || advantages.size() != G)
        throw Error(ErrorCode::LengthMismatch, "group arrays have different sizes");
    if (!(epsilon > 0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be positive");
    if (beta < 0) throw Error(ErrorCode::InvalidArgument, "beta must be >= 0");
    if (beta > 0 && ref_lp.size() != G) throw Error(ErrorCode::MissingRefLogprobs, "beta > 0 needs reference logprobs");

    ObjectiveBreakdown b;
    double surr_sum = 0, kl_sum = 0;
    std::size_t tokens = 0, clipped = 0;
    for (std::size_t i = 0; i < G; ++i) {
        const auto& nw = new_lp[i];
        if (old_lp[i].size() != nw.size() || (beta > 0 && ref_lp[i].size() != nw.size()))
            throw Error(ErrorCode::LengthMismatch, fmt::format("rollout {}: logprob rows differ in length", i));
        if (nw.empty()) throw Error(ErrorCode::EmptySequence, fmt::format("rollout {} has no tokens", i));
        const double A = advantages[i];
        // Running means: a constant row averages to exactly that constant.
        double surr_mean = 0, kl_mean = 0;
        std::vector<double> terms;
        for (std::size_t t = 0; t < nw.size(); ++t) {
            const double ratio = std::exp(nw[t] - old_lp[i][t]);
            const double clipped_ratio = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
            const double plain = ratio * A, clip = clipped_ratio * A;
            const double term = std::min(plain, clip);
            if (clip < plain) ++clipped;
            const double k = static_cast<double>(t + 1);
            surr_mean += (term - surr_mean) / k;
            if (beta > 0) {
                const double x = ref_lp[i][t] - nw[t];
                const double k3 = std::exp(x) - x - 1.0;
                kl_mean += (k3 - kl_mean) / k;
            }
            if (keep_terms) terms.push_back(term);
        }
        surr_sum += surr_mean;
        kl_sum += kl_mean;
        tokens += nw.size();
        if (keep_terms) b.per_token_terms.push_back(std::move(terms));
    }
    b.surrogate = surr_sum / static_cast<double>(G);
    b.kl_term = beta > 0 ? kl_sum / static_cast<double>(G) : 0.0;
    b.total = b.surrogate - beta * b.kl_term;
    b.clip_fraction = static_cast<double>(clipped) / static_cast<double>(tokens);
    return b;
}

ObjectiveBreakdown clipped_objective(const RolloutGroup& group, const AdvantageSet& advantages, double epsilon,
                                     double beta, bool keep_terms) {
    check_invariants(group);
    if (advantages.per_rollout.size() != group.G())
        throw Error(ErrorCode::LengthMismatch, "advantage count differs from group size");
    std::vector<std::vector<double>> nw, old, ref;
    for (std::size_t i = 0; i < group.G(); ++i) {
        const auto& r = group.rollouts[i];
        nw.push_back(r.logprobs_new.logprobs);
        old.push_back(r.logprobs_old.logprobs);
        if (beta > 0) {
            if (!r.logprobs_ref)
                throw Error(ErrorCode::MissingRefLogprobs, fmt::format("rollout {} has no reference logprobs", i));
            ref.push_back(r.logprobs_ref->logprobs);
        }
    }
    return clipped_objective(nw, old, ref, advantages.per_rollout, epsilon, beta, keep_terms);
}

json to_json(const ObjectiveBreakdown& b) {
    return {{"surrogate", b.surrogate}, {"kl_term", b.kl_term}, {"total", b.total}, {"clip_fraction", b.clip_fraction}};
}

// Gradient check ---------------------------------------------------------------

namespace {

std::vector<double> log_softmax(const std::vector<double>& z) {
    double m = *std::max_element(z.begin(), z.end());
    double s = 0;
    for (double x : z) s += std::exp(x - m);
    double lse = m + std::log(s);
    std::vector<double> out(z.size());
    for (std::size_t v = 0; v < z.size(); ++v) out[v] = z[v] - lse;
    return out;
}

double total_objective(const ToyInstance& inst, double epsilon, double beta) {
    auto b = clipped_objective(toy_logprobs(inst), inst.old_lp, inst.ref_lp, inst.advantages, epsilon, beta);
    return b.total;
}

} // namespace

std::vector<std::vector<double>> toy_logprobs(const ToyInstance& inst) {
    std::vector<std::vector<double>> out(inst.tokens.size());
    for (std::size_t i = 0; i < inst.tokens.size(); ++i)
        for (std::size_t t = 0; t < inst.tokens[i].size(); ++t)
            out[i].push_back(log_softmax(inst.logits[i][t])[static_cast<std::size_t>(inst.tokens[i][t])]);
    return out;
}

ToyInstance random_toy_instance(std::uint64_t seed, int G, int max_tokens, int vocab, double spread) {
    if (G < 2 || max_tokens < 1 || vocab < 2) throw Error(ErrorCode::InvalidArgument, "toy instance too small");
    Rng rng(seed);
    ToyInstance inst;
    inst.vocab = vocab;
    std::vector<double> rewards;
    for (int i = 0; i < G; ++i) {
        int len = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(max_tokens)));
        std::vector<int> toks;
        std::vector<std::vector<double>> lg;
        std::vector<double> old_row, ref_row;
        for (int t = 0; t < len; ++t) {
            std::vector<double> z(static_cast<std::size_t>(vocab)), z_old(z.size()), z_ref(z.size());
            for (int v = 0; v < vocab; ++v) {
                z[v] = rng.normal();
                z_old[v] = z[v] + spread * rng.normal();
                z_ref[v] = z[v] + spread * rng.normal();
            }
            int tok = static_cast<int>(rng.index(static_cast<std::size_t>(vocab)));
            toks.push_back(tok);
            old_row.push_back(log_softmax(z_old)[tok]);
            ref_row.push_back(log_softmax(z_ref)[tok]);
            lg.push_back(std::move(z));
        }
        inst.tokens.push_back(std::move(toks));
        inst.logits.push_back(std::move(lg));
        inst.old_lp.push_back(std::move(old_row));
        inst.ref_lp.push_back(std::move(ref_row));
        rewards.push_back(rng.uniform() * 14.0);
    }
    inst.advantages = group_advantages(rewards).per_rollout;
    return inst;
}

std::vector<std::vector<std::vector<double>>> analytic_gradient(const ToyInstance& inst, double epsilon, double beta) {
    const double G = static_cast<double>(inst.tokens.size());
    std::vector<std::vector<std::vector<double>>> grad(inst.tokens.size());
    for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
        const double len = static_cast<double>(inst.tokens[i].size());
        const double A = inst.advantages[i];
        for (std::size_t t = 0; t < inst.tokens[i].size(); ++t) {
            auto lp = log_softmax(inst.logits[i][t]);
            const auto tok = static_cast<std::size_t>(inst.tokens[i][t]);
            const double ratio = std::exp(lp[tok] - inst.old_lp[i][t]);
            const double clipped_ratio = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
            // d term / d logpi: the unclipped branch is ratio*A; a clamped ratio is constant.
            double dterm = clipped_ratio * A < ratio * A ? 0.0 : ratio * A;
            if (beta > 0) dterm -= beta * (1.0 - std::exp(inst.ref_lp[i][t] - lp[tok]));
            std::vector<double> g(lp.size());
            for (std::size_t v = 0; v < lp.size(); ++v)
                g[v] = dterm * ((v == tok ? 1.0 : 0.0) - std::exp(lp[v])) / (G * len);
            grad[i].push_back(std::move(g));
        }
    }
    return grad;
}

GradCheckReport objective_gradient_check(const ToyInstance& inst, double epsilon, double beta, double h) {
    GradCheckReport rep;
    auto grad = analytic_gradient(inst, epsilon, beta);
    auto lp = toy_logprobs(inst);
    const double kink_hi = std::log1p(epsilon), kink_lo = std::log1p(-epsilon);
    ToyInstance work = inst;
    for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
        for (std::size_t t = 0; t < inst.tokens[i].size(); ++t) {
            // A step of h in one logit moves this token's logprob by at most h.
            const double lr = lp[i][t] - inst.old_lp[i][t];
            const bool near_kink = std::abs(lr - kink_hi) <= 2 * h || std::abs(lr - kink_lo) <= 2 * h;
            for (std::size_t v = 0; v < inst.logits[i][t].size(); ++v) {
                if (near_kink) {
                    ++rep.excluded;
                    rep.excluded_positions.push_back(fmt::format("{}:{}:{}", i, t, v));
                    continue;
                }
                double& z = work.logits[i][t][v];
                const double z0 = z;
                z = z0 + h;
                const double fp = total_objective(work, epsilon, beta);
                z = z0 - h;
                const double fm = total_objective(work, epsilon, beta);
                z = z0;
                const double fd = (fp - fm) / (2 * h);
                const double a = grad[i][t][v];
                const double err = std::abs(a - fd);
                rep.max_abs_err = std::max(rep.max_abs_err, err);
                rep.max_rel_err = std::max(rep.max_rel_err, err / std::max({std::abs(a), std::abs(fd), 1e-6}));
                if (err > std::max(1e-4, 1e-3 * std::abs(a))) ++rep.failures;
                ++rep.checked;
            }
        }
    }
    return rep;
}

} // namespace crux::grpo
