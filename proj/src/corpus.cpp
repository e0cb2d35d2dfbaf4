#include "crux/corpus.hpp"

#include <cmath>
#include <regex>

#include <fmt/format.h>

#include "crux/error.hpp"

namespace crux::corpus {

RawPair raw_pair_from_json(const json& j) {
    RawPair p;
    try {
        p.id = j.at("id").get<std::string>();
        p.description = j.at("description").get<std::string>();
        p.reference_code = j.at("reference_code").get<std::string>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("RawPair: ") + e.what());
    }
    return p;
}

json to_json(const RawPair& p) {
    return {{"id", p.id}, {"description", p.description}, {"reference_code", p.reference_code}};
}

std::string_view to_string(Category c) {
    switch (c) {
    case Category::EasyQuestion: return "EasyQuestion";
    case Category::SpecialNonText: return "SpecialNonText";
    case Category::NormalData: return "NormalData";
    }
    return "";
}

Category category_from_string(std::string_view s) {
    if (s == "EasyQuestion") return Category::EasyQuestion;
    if (s == "SpecialNonText") return Category::SpecialNonText;
    if (s == "NormalData") return Category::NormalData;
    throw Error(ErrorCode::ParseError, fmt::format("unknown category '{}'", s));
}

const std::vector<std::string>& default_keywords() {
    static const std::vector<std::string> kKeywords = {"k-map",    "kmap",       "karnaugh",   "fsm",
                                                       "state machine", "waveform", "sequential", "truth table"};
    return kKeywords;
}

Category categorize(const RawPair& pair, ProbeVerdict verdict, const std::vector<std::string>& keywords) {
    if (verdict == ProbeVerdict::Pass) return Category::EasyQuestion;
    auto desc = to_lower(pair.description);
    for (const auto& kw : keywords) {
        if (!kw.empty() && desc.find(to_lower(kw)) != std::string::npos) return Category::SpecialNonText;
    }
    return Category::NormalData;
}

AugmentationPolicy AugmentationPolicy::with_default_pools() {
    AugmentationPolicy p;
    p.prefix_pool = {
        "Please act as a professional Verilog designer.",
        "I need some help with a hardware design task.",
        "Here is a circuit I would like you to write in Verilog.",
    };
    p.suffix_pool = {
        "Give me the complete code.",
        "Please write the full Verilog module.",
        "Make sure the code is synthesizable.",
    };
    return p;
}

json to_json(const verilog::DegradationPolicy& p) {
    return {{"p_full_retain", p.p_full_retain}, {"p_keep_element", p.p_keep_element}};
}

json to_json(const AugmentationPolicy& p) {
    return {{"p_middle_insert", p.p_middle_insert}, {"p_prefix", p.p_prefix}, {"p_suffix", p.p_suffix},
            {"prefix_pool", p.prefix_pool},         {"suffix_pool", p.suffix_pool}};
}

namespace {

void check_probability(double p, std::string_view name) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, fmt::format("{} must be in [0,1]", name));
}

} // namespace

verilog::DegradationPolicy degradation_policy_from_json(const json& j) {
    verilog::DegradationPolicy p;
    p.p_full_retain = j.value("p_full_retain", p.p_full_retain);
    p.p_keep_element = j.value("p_keep_element", p.p_keep_element);
    check_probability(p.p_full_retain, "p_full_retain");
    check_probability(p.p_keep_element, "p_keep_element");
    return p;
}

AugmentationPolicy augmentation_policy_from_json(const json& j) {
    AugmentationPolicy p = AugmentationPolicy::with_default_pools();
    p.p_middle_insert = j.value("p_middle_insert", p.p_middle_insert);
    p.p_prefix = j.value("p_prefix", p.p_prefix);
    p.p_suffix = j.value("p_suffix", p.p_suffix);
    if (j.contains("prefix_pool")) p.prefix_pool = j.at("prefix_pool").get<std::vector<std::string>>();
    if (j.contains("suffix_pool")) p.suffix_pool = j.at("suffix_pool").get<std::vector<std::string>>();
    check_probability(p.p_middle_insert, "p_middle_insert");
    check_probability(p.p_prefix, "p_prefix");
    check_probability(p.p_suffix, "p_suffix");
    return p;
}

namespace {

std::string rtrim_newlines(std::string s) {
    while (!s.empty() && (s.back() == '\n' || s.back() == ' ' || s.back() == '\r' || s.back() == '\t')) s.pop_back();
    return s;
}

// Offsets [b, e) of the whitespace separating two paragraphs or sentences,
// whichever is nearest the character midpoint.
std::optional<std::pair<std::size_t, std::size_t>> middle_break(const std::string& text) {
    static const std::regex kParagraph(R"(\n[ \t]*\n\s*)");
    static const std::regex kSentence(R"([.!?][ \t]+)");
    const double mid = static_cast<double>(text.size()) / 2.0;
    auto nearest = [&](const std::regex& re, bool keep_first_char) {
        std::optional<std::pair<std::size_t, std::size_t>> best;
        double best_dist = 0;
        for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator(); ++it) {
            auto b = static_cast<std::size_t>(it->position()) + (keep_first_char ? 1 : 0);
            auto e = static_cast<std::size_t>(it->position() + it->length());
            if (b == 0 || e >= text.size()) continue;
            double dist = std::abs(static_cast<double>(b) - mid);
            if (!best || dist < best_dist) {
                best = {{b, e}};
                best_dist = dist;
            }
        }
        return best;
    };
    if (auto p = nearest(kParagraph, false)) return p;
    return nearest(kSentence, true);
}

} // namespace

RealSpec build_realspec(const RawPair& pair, Category category, const verilog::DegradedInterface& degraded,
                        const AugmentationPolicy& aug, std::uint64_t rng_seed,
                        const std::vector<std::string>& diagrams) {
    Rng rng(rng_seed);
    // Fixed draw order: placement, prefix coin, prefix pick, suffix coin, suffix pick.
    const bool want_middle = rng.bernoulli(aug.p_middle_insert);
    const bool want_prefix = rng.bernoulli(aug.p_prefix);
    const double prefix_pick = rng.uniform();
    const bool want_suffix = rng.bernoulli(aug.p_suffix);
    const double suffix_pick = rng.uniform();

    const std::string block = rtrim_newlines(verilog::render_degraded(degraded));
    RealSpec out;
    std::string body;
    if (category == Category::SpecialNonText) {
        if (diagrams.empty())
            throw Error(ErrorCode::MissingDiagram, fmt::format("task '{}' has no diagram text", pair.id));
        for (std::size_t i = 0; i < diagrams.size(); ++i) {
            if (i) body += "\n\n";
            body += rtrim_newlines(diagrams[i]);
        }
        body += "\n\n" + block;
        out.placement = Placement::End;
    } else {
        std::string desc = rtrim_newlines(pair.description);
        std::optional<std::pair<std::size_t, std::size_t>> brk;
        if (want_middle) brk = middle_break(desc);
        if (brk) {
            body = desc.substr(0, brk->first) + "\n\n" + block + "\n\n" + desc.substr(brk->second);
            out.placement = Placement::Middle;
        } else {
            body = desc.empty() ? block : desc + "\n\n" + block;
            out.placement = Placement::End;
        }
    }
    auto pick = [](const std::vector<std::string>& pool, double u) {
        auto idx = std::min(pool.size() - 1, static_cast<std::size_t>(u * static_cast<double>(pool.size())));
        return pool[idx];
    };
    if (want_prefix && !aug.prefix_pool.empty()) {
        body = pick(aug.prefix_pool, prefix_pick) + "\n\n" + body;
        out.has_prefix = true;
    }
    if (want_suffix && !aug.suffix_pool.empty()) {
        body += "\n\n" + pick(aug.suffix_pool, suffix_pick);
        out.has_suffix = true;
    }
    out.text = std::move(body);
    return out;
}

json to_json(const PromptBundle& b) {
    json stages = json::array();
    for (const auto& s : b.stages) stages.push_back({{"stage", s.stage}, {"prompt", s.prompt}});
    return {{"id", b.id}, {"category", to_string(b.category)}, {"stages", stages}};
}

namespace {

constexpr std::string_view kCanonicalFormat =
    "Answer in exactly this layout:\n"
    "## Module Interface\n"
    "```verilog\n"
    "<the module header copied from the reference code, ending with ');'>\n"
    "```\n"
    "\n"
    "## Core Functions\n"
    "- <one bullet per essential behaviour>\n"
    "\n"
    "## Key Considerations\n"
    "- <one bullet per subtle implementation detail or constraint>\n";

std::string header_of(const RawPair& pair) {
    try {
        return verilog::render_interface(verilog::parse_module_header(pair.reference_code),
                                         verilog::RenderStyle::HeaderBlock);
    } catch (const Error&) {
        return "(header could not be parsed; copy it from the reference code)";
    }
}

} // namespace

PromptBundle make_crux_derivation_prompt(const RawPair& pair, Category category) {
    PromptBundle bundle{pair.id, category, {}};
    const std::string header = header_of(pair);
    switch (category) {
    case Category::EasyQuestion:
        throw Error(ErrorCode::UnsupportedCategory,
                    fmt::format("task '{}' is an Easy Question; its CRUX is built without a model", pair.id));
    case Category::NormalData: {
        std::string p = "You are an experienced digital hardware engineer.\n"
                        "Read the task description and its reference Verilog implementation, then extract and "
                        "refine the design intent into three sections: the Module Interface, the Core Functions "
                        "the circuit must implement, and the Key Considerations (subtle details such as reset "
                        "polarity, clock edges, reset values and corner cases).\n\n";
        p += "### Description\n" + pair.description + "\n\n";
        p += "### Reference code\n```verilog\n" + pair.reference_code + "\n```\n\n";
        p += "### Module header\n```verilog\n" + header + "\n```\n\n";
        p += std::string(kCanonicalFormat);
        bundle.stages.push_back({"extract", p});
        break;
    }
    case Category::SpecialNonText: {
        std::string p = "You are a circuit parser. From the description and the reference code below, produce a "
                        "diagram and a concise analysis of the circuit.\n"
                        "- For finite state machines, list every transition as a row in the form "
                        "\"State → Condition → Next State\", followed by the output of each state.\n"
                        "- For Karnaugh maps and truth tables, give the simplified logical expression of every "
                        "output.\n"
                        "- For sequential circuits, describe the core behaviour cycle by cycle.\n"
                        "Put the diagram rows and analysis under Core Functions.\n\n";
        p += "### Description\n" + pair.description + "\n\n";
        p += "### Reference code\n```verilog\n" + pair.reference_code + "\n```\n\n";
        p += "### Module header\n```verilog\n" + header + "\n```\n\n";
        p += std::string(kCanonicalFormat);
        bundle.stages.push_back({"diagram", p});

        std::string v = "You are checking a circuit analysis against its implementation.\n"
                        "Decide whether the diagram and analysis below describe exactly the behaviour of the "
                        "reference code. Reply with VALID or INVALID on the first line, then a short reason.\n\n";
        v += "### Reference code\n```verilog\n" + pair.reference_code + "\n```\n\n";
        v += "### Diagram and analysis\n" + std::string(kDiagramPlaceholder) + "\n";
        bundle.stages.push_back({"validate", v});
        break;
    }
    }
    return bundle;
}

std::string fill_validation_prompt(const PromptStage& validate_stage, std::string_view diagram_reply) {
    std::string out = validate_stage.prompt;
    auto pos = out.find(kDiagramPlaceholder);
    if (pos != std::string::npos) out.replace(pos, kDiagramPlaceholder.size(), diagram_reply);
    return out;
}

std::string_view to_string(ValidationVerdict v) {
    switch (v) {
    case ValidationVerdict::Valid: return "valid";
    case ValidationVerdict::Invalid: return "invalid";
    case ValidationVerdict::NotApplicable: return "n/a";
    }
    return "";
}

ValidationVerdict parse_validation_reply(std::string_view reply) {
    static const std::regex kInvalid(R"(\b(INVALID|NOT\s+VALID)\b)", std::regex::icase);
    static const std::regex kValid(R"(\bVALID\b)", std::regex::icase);
    std::string s(reply);
    if (std::regex_search(s, kInvalid)) return ValidationVerdict::Invalid;
    if (std::regex_search(s, kValid)) return ValidationVerdict::Valid;
    return ValidationVerdict::Invalid;
}

json to_json(const TaskRecord& r) {
    return {{"id", r.id},
            {"category", to_string(r.category)},
            {"realspec", r.realspec},
            {"crux", doc::render_crux(r.crux)},
            {"reference_code", r.reference_code},
            {"provenance", r.provenance}};
}

TaskRecord task_record_from_json(const json& j) {
    TaskRecord r;
    try {
        r.id = j.at("id").get<std::string>();
        r.category = category_from_string(j.at("category").get<std::string>());
        r.realspec = j.at("realspec").get<std::string>();
        r.reference_code = j.at("reference_code").get<std::string>();
        r.provenance = j.value("provenance", json::object());
        auto report = doc::parse_crux(j.at("crux").get<std::string>());
        if (!report.doc) throw Error(ErrorCode::ParseError, fmt::format("task '{}': crux text does not parse", r.id));
        r.crux = *report.doc;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("TaskRecord: ") + e.what());
    }
    return r;
}

AssembleResult assemble_record(const RawPair& pair, Category category, const std::string& realspec,
                               const std::optional<std::string>& crux_text, ValidationVerdict verdict,
                               json provenance) {
    auto reclassify = [&](std::string reason) -> AssembleResult {
        return Reclassification{pair.id, Category::NormalData, std::move(reason)};
    };
    if (trim(realspec).empty()) return reclassify("empty realspec");
    // The interface always comes from the reference code header.
    verilog::ModuleInterface iface;
    try {
        iface = verilog::parse_module_header(pair.reference_code);
    } catch (const Error& e) {
        return reclassify(std::string("reference header: ") + e.what());
    }

    TaskRecord rec{pair.id, realspec, {}, pair.reference_code, category, std::move(provenance)};
    if (category == Category::EasyQuestion) {
        auto core = doc::normalize_block(pair.description);
        if (core.empty()) return reclassify("empty description");
        rec.crux = doc::CruxDoc{iface, {core}, {}};
        return rec;
    }
    if (!crux_text) return reclassify("no CRUX transcript");
    auto report = doc::parse_crux(*crux_text);
    if (!report.doc) {
        std::string why = "CRUX does not parse";
        for (const auto& d : report.diagnostics)
            if (d.severity == doc::Severity::Error) why += "; " + d.message;
        return reclassify(why);
    }
    if (category == Category::SpecialNonText && verdict != ValidationVerdict::Valid)
        return reclassify("diagram failed validation");
    if (report.doc->key_considerations.empty()) return reclassify("empty Key Considerations");
    rec.crux = doc::CruxDoc{iface, report.doc->core_functions, report.doc->key_considerations};
    return rec;
}

AssembleResult reconstruct_task(const RawPair& pair, Category category, const DerivationTranscripts& transcripts,
                                const PipelinePolicies& policies, std::uint64_t seed,
                                const std::string& config_hash) {
    const std::uint64_t task_seed = derive_seed(seed, pair.id);
    const std::uint64_t degrade_seed = derive_seed(task_seed, "degrade");
    const std::uint64_t augment_seed = derive_seed(task_seed, "augment");

    verilog::ModuleInterface iface;
    try {
        iface = verilog::parse_module_header(pair.reference_code);
    } catch (const Error& e) {
        return Reclassification{pair.id, Category::NormalData, std::string("reference header: ") + e.what()};
    }
    auto degraded = verilog::degrade_interface(iface, policies.degradation, degrade_seed);

    std::optional<std::string> crux_text;
    std::vector<std::string> diagrams;
    ValidationVerdict verdict = ValidationVerdict::NotApplicable;
    switch (category) {
    case Category::EasyQuestion: break;
    case Category::NormalData: crux_text = transcripts.extract; break;
    case Category::SpecialNonText: {
        crux_text = transcripts.diagram;
        if (!crux_text) return Reclassification{pair.id, Category::NormalData, "no diagram transcript"};
        auto report = doc::parse_crux(*crux_text);
        if (!report.doc) return Reclassification{pair.id, Category::NormalData, "diagram CRUX does not parse"};
        diagrams = report.doc->core_functions;
        verdict = transcripts.validate ? parse_validation_reply(*transcripts.validate) : ValidationVerdict::Invalid;
        break;
    }
    }

    auto realspec = build_realspec(pair, category, degraded, policies.augmentation, augment_seed, diagrams);

    json kept = json::array();
    for (const auto& rp : degraded.retained_ports)
        kept.push_back({{"name", rp.port.name},
                        {"direction", rp.keeps(verilog::kKeepDirection)},
                        {"width", rp.keeps(verilog::kKeepWidth)}});
    json provenance = {
        {"source_id", pair.id},
        {"seed", seed},
        {"task_seed", task_seed},
        {"config_hash", config_hash},
        {"policy", {{"degradation", to_json(policies.degradation)}, {"augmentation", to_json(policies.augmentation)}}},
        {"degradation", {{"fully_retained", degraded.fully_retained}, {"retained_ports", kept}}},
        {"placement", realspec.placement == Placement::Middle ? "middle" : "end"},
        {"prefix", realspec.has_prefix},
        {"suffix", realspec.has_suffix},
    };
    return assemble_record(pair, category, realspec.text, crux_text, verdict, std::move(provenance));
}

} // namespace crux::corpus
