#pragma once
// Dataset reconstruction: (description, code) pairs -> categorized
// (RealSpec, CRUX, code) task records.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "crux/crux_document.hpp"
#include "crux/util.hpp"
#include "crux/verilog_interface.hpp"

namespace crux::corpus {

struct RawPair {
    std::string id;
    std::string description;
    std::string reference_code;
};

RawPair raw_pair_from_json(const json& j);
json to_json(const RawPair& p);

enum class Category { EasyQuestion, SpecialNonText, NormalData };
std::string_view to_string(Category c);
Category category_from_string(std::string_view s);

enum class ProbeVerdict { Pass, Fail };

const std::vector<std::string>& default_keywords();

/// pass -> EasyQuestion; fail with a keyword (case-insensitive substring of the
/// description) -> SpecialNonText; otherwise NormalData.
Category categorize(const RawPair& pair, ProbeVerdict verdict, const std::vector<std::string>& keywords);

// RealSpec ---------------------------------------------------------------

struct AugmentationPolicy {
    double p_middle_insert = 24.0 / 165.0;
    std::vector<std::string> prefix_pool;
    std::vector<std::string> suffix_pool;
    double p_prefix = 0.5;
    double p_suffix = 0.5;

    /// Policy with the small illustrative prefix/suffix pools filled in.
    static AugmentationPolicy with_default_pools();
};

json to_json(const verilog::DegradationPolicy& p);
json to_json(const AugmentationPolicy& p);
verilog::DegradationPolicy degradation_policy_from_json(const json& j);
AugmentationPolicy augmentation_policy_from_json(const json& j);

enum class Placement { Middle, End };

struct RealSpec {
    std::string text;
    Placement placement = Placement::End;
    bool has_prefix = false;
    bool has_suffix = false;
};

/// Pieces are joined with a blank line ("\n\n"). SpecialNonText replaces the
/// description with `diagrams` and always appends the interface at the end;
/// it throws Error(MissingDiagram) when `diagrams` is empty.
RealSpec build_realspec(const RawPair& pair, Category category, const verilog::DegradedInterface& degraded,
                        const AugmentationPolicy& aug, std::uint64_t rng_seed,
                        const std::vector<std::string>& diagrams = {});

// CRUX derivation prompts --------------------------------------------------

struct PromptStage {
    std::string stage; // "extract", "diagram" or "validate"
    std::string prompt;
};

struct PromptBundle {
    std::string id;
    Category category;
    std::vector<PromptStage> stages;
};

json to_json(const PromptBundle& b);

inline constexpr std::string_view kDiagramPlaceholder = "{diagram}";

/// Throws Error(UnsupportedCategory) for EasyQuestion.
PromptBundle make_crux_derivation_prompt(const RawPair& pair, Category category);

/// Substitutes the circuit-parser output into the validation stage template.
std::string fill_validation_prompt(const PromptStage& validate_stage, std::string_view diagram_reply);

enum class ValidationVerdict { Valid, Invalid, NotApplicable };
std::string_view to_string(ValidationVerdict v);

/// Reads the checker's reply; anything without a clear VALID is Invalid.
ValidationVerdict parse_validation_reply(std::string_view reply);

// Records --------------------------------------------------------------------

struct TaskRecord {
    std::string id;
    std::string realspec;
    doc::CruxDoc crux;
    std::string reference_code;
    Category category;
    json provenance;
};

json to_json(const TaskRecord& r);
/// Throws Error(ParseError) when the embedded CRUX text does not parse.
TaskRecord task_record_from_json(const json& j);

struct Reclassification {
    std::string id;
    Category to = Category::NormalData;
    std::string reason;
};

using AssembleResult = std::variant<TaskRecord, Reclassification>;

AssembleResult assemble_record(const RawPair& pair, Category category, const std::string& realspec,
                               const std::optional<std::string>& crux_text, ValidationVerdict verdict,
                               json provenance = json::object());

struct DerivationTranscripts {
    std::optional<std::string> extract;
    std::optional<std::string> diagram;
    std::optional<std::string> validate;
};

struct PipelinePolicies {
    verilog::DegradationPolicy degradation;
    AugmentationPolicy augmentation = AugmentationPolicy::with_default_pools();
};

/// Full per-task reconstruction: degrade, build RealSpec, assemble. Pure in its inputs.
AssembleResult reconstruct_task(const RawPair& pair, Category category, const DerivationTranscripts& transcripts,
                                const PipelinePolicies& policies, std::uint64_t seed,
                                const std::string& config_hash = "");

} // namespace crux::corpus
