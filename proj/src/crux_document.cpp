#include "crux/crux_document.hpp"

#include <map>
#include <regex>

#include <fmt/format.h>

#include "crux/error.hpp"
#include "crux/util.hpp"

namespace crux::doc {

std::string_view to_string(Section s) {
    switch (s) {
    case Section::Interface: return "Module Interface";
    case Section::CoreFunctions: return "Core Functions";
    case Section::KeyConsiderations: return "Key Considerations";
    }
    return "";
}

std::string_view to_string(MismatchKind k) {
    switch (k) {
    case MismatchKind::MissingPort: return "missing_port";
    case MismatchKind::ExtraPort: return "extra_port";
    case MismatchKind::Direction: return "direction";
    case MismatchKind::Width: return "width";
    }
    return "";
}

namespace {

std::string rtrim(std::string_view s) {
    std::size_t e = s.size();
    while (e > 0 && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(0, e));
}

bool is_fence(std::string_view line) { return line.substr(0, 3) == "```"; }

std::optional<Section> header_kind(std::string_view line) {
    if (line.empty() || line[0] == ' ' || line[0] == '\t' || line[0] == '-') return std::nullopt;
    std::size_t b = 0, e = line.size();
    auto deco = [](char c) { return c == '#' || c == '*' || c == '_' || c == ' ' || c == '\t' || c == ':'; };
    while (b < e && deco(line[b])) ++b;
    while (e > b && deco(line[e - 1])) --e;
    std::string name;
    bool space = false;
    for (char c : to_lower(line.substr(b, e - b))) {
        if (c == ' ' || c == '\t') {
            space = true;
            continue;
        }
        if (space && !name.empty()) name.push_back(' ');
        space = false;
        name.push_back(c);
    }
    if (name == "module interface" || name == "module interfaces") return Section::Interface;
    if (name == "core function" || name == "core functions") return Section::CoreFunctions;
    if (name == "key consideration" || name == "key considerations") return Section::KeyConsiderations;
    return std::nullopt;
}

void render_blocks(std::string& out, const std::vector<std::string>& blocks) {
    for (const auto& block : blocks) {
        auto lines = split_lines(block);
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (i == 0) out += "- " + lines[i] + "\n";
            else out += "  " + lines[i] + "\n";
        }
    }
}

struct SectionLines {
    std::vector<std::pair<int, std::string>> lines; // (line number, text)
};

std::vector<std::string> parse_blocks(const SectionLines& sec) {
    std::vector<std::string> blocks;
    std::vector<std::string> cur;
    bool cur_is_paragraph = false;
    bool in_fence = false;
    auto flush = [&] {
        if (!cur.empty()) {
            std::string joined;
            for (std::size_t i = 0; i < cur.size(); ++i) {
                if (i) joined += "\n";
                joined += cur[i];
            }
            auto norm = normalize_block(joined);
            if (!norm.empty()) blocks.push_back(norm);
        }
        cur.clear();
        cur_is_paragraph = false;
    };
    for (const auto& [lineno, line] : sec.lines) {
        if (in_fence) {
            cur.push_back(line);
            if (is_fence(line)) in_fence = false;
            continue;
        }
        if (is_fence(line)) {
            if (cur.empty()) cur_is_paragraph = true;
            cur.push_back(line);
            in_fence = true;
            continue;
        }
        auto bullet = line.substr(0, 2);
        if (bullet == "- " || bullet == "* " || line == "-" || line == "*") {
            flush();
            cur.push_back(line.size() > 2 ? line.substr(2) : "");
            continue;
        }
        if (line.substr(0, 2) == "  " && !cur.empty()) {
            cur.push_back(line.substr(2));
            continue;
        }
        if (trim(line).empty()) {
            flush();
            continue;
        }
        if (!cur_is_paragraph) {
            flush();
            cur_is_paragraph = true;
        }
        cur.push_back(line);
    }
    flush();
    return blocks;
}

} // namespace

std::string normalize_block(std::string_view block) {
    auto lines = split_lines(block);
    for (auto& l : lines) l = rtrim(l);
    std::size_t b = 0, e = lines.size();
    while (b < e && lines[b].empty()) ++b;
    while (e > b && lines[e - 1].empty()) --e;
    std::string out;
    for (std::size_t i = b; i < e; ++i) {
        if (i > b) out += "\n";
        out += lines[i];
    }
    return out;
}

std::vector<std::string> check_invariants(const CruxDoc& doc) {
    auto problems = verilog::check_invariants(doc.interface);
    if (doc.core_functions.empty()) problems.push_back("core_functions is empty");
    auto check_blocks = [&](const std::vector<std::string>& blocks, std::string_view what) {
        for (const auto& b : blocks) {
            if (b.empty()) problems.push_back(fmt::format("empty {} block", what));
            else if (normalize_block(b) != b) problems.push_back(fmt::format("{} block is not normalized", what));
        }
    };
    check_blocks(doc.core_functions, "core_functions");
    check_blocks(doc.key_considerations, "key_considerations");
    return problems;
}

std::string render_crux(const CruxDoc& doc) {
    std::string out = "## Module Interface\n```verilog\n";
    out += verilog::render_interface(doc.interface, verilog::RenderStyle::HeaderBlock);
    out += "\n```\n\n## Core Functions\n";
    render_blocks(out, doc.core_functions);
    out += "\n## Key Considerations\n";
    render_blocks(out, doc.key_considerations);
    return out;
}

CruxParseReport parse_crux(std::string_view text) {
    CruxParseReport report;
    std::map<Section, SectionLines> sections;
    std::optional<Section> current;
    bool in_fence = false;
    bool stray_text = false;
    int lineno = 0;
    for (const auto& line : split_lines(text)) {
        ++lineno;
        if (!in_fence) {
            if (auto kind = header_kind(line)) {
                if (report.sections_found.count(*kind))
                    report.diagnostics.push_back(
                        {Severity::Warning, fmt::format("duplicate '{}' section", to_string(*kind)), lineno});
                report.sections_found.insert(*kind);
                current = kind;
                continue;
            }
        }
        if (is_fence(line)) in_fence = !in_fence;
        if (current) sections[*current].lines.emplace_back(lineno, line);
        else if (!trim(line).empty()) stray_text = true;
    }
    if (stray_text) report.diagnostics.push_back({Severity::Info, "text before the first section ignored", 1});

    // Easy-Question style documents have no Key Considerations, so that one is only a warning.
    for (auto s : {Section::Interface, Section::CoreFunctions, Section::KeyConsiderations})
        if (!report.sections_found.count(s))
            report.diagnostics.push_back({s == Section::KeyConsiderations ? Severity::Warning : Severity::Error,
                                          fmt::format("missing section '{}'", to_string(s)), 0});

    std::optional<verilog::ModuleInterface> iface;
    if (report.sections_found.count(Section::Interface)) {
        const auto& lines = sections[Section::Interface].lines;
        std::string header;
        int header_line = lines.empty() ? 0 : lines.front().first;
        bool found_fence = false;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            if (!is_fence(lines[i].second)) continue;
            found_fence = true;
            header_line = lines[i].first;
            for (std::size_t j = i + 1; j < lines.size() && !is_fence(lines[j].second); ++j)
                header += lines[j].second + "\n";
            break;
        }
        if (!found_fence) {
            report.diagnostics.push_back(
                {Severity::Warning, "no code fence in Module Interface; parsing section text", header_line});
            for (const auto& [n, l] : lines) header += l + "\n";
        }
        try {
            iface = verilog::parse_module_header(header);
            report.interface_parsable = true;
            report.interface = iface;
        } catch (const Error& e) {
            report.diagnostics.push_back({Severity::Error, fmt::format("interface: {}", e.what()), header_line});
        }
    }

    report.core_functions = parse_blocks(sections[Section::CoreFunctions]);
    report.key_considerations = parse_blocks(sections[Section::KeyConsiderations]);
    if (report.sections_found.count(Section::CoreFunctions) && report.core_functions.empty())
        report.diagnostics.push_back({Severity::Error, "Core Functions section is empty", 0});

    if (report.sections_found.count(Section::CoreFunctions) && report.interface_parsable &&
        !report.core_functions.empty()) {
        report.doc = CruxDoc{*iface, report.core_functions, report.key_considerations};
    }
    return report;
}

std::vector<Mismatch> validate_against_reference(const CruxDoc& doc, const verilog::ModuleInterface& ref) {
    std::vector<Mismatch> out;
    for (const auto& rp : ref.ports) {
        const auto* dp = doc.interface.find_port(rp.name);
        if (!dp) {
            out.push_back({MismatchKind::MissingPort, rp.name, "", ""});
            continue;
        }
        if (dp->direction != rp.direction)
            out.push_back({MismatchKind::Direction, rp.name, std::string(verilog::to_string(rp.direction)),
                           std::string(verilog::to_string(dp->direction))});
        if (dp->width_bits != rp.width_bits)
            out.push_back({MismatchKind::Width, rp.name, std::to_string(rp.width_bits),
                           std::to_string(dp->width_bits)});
    }
    for (const auto& dp : doc.interface.ports)
        if (!ref.find_port(dp.name)) out.push_back({MismatchKind::ExtraPort, dp.name, "", ""});
    return out;
}

GenerationParts split_generation(std::string_view text) {
    auto lines = split_lines(text);
    static const std::regex kEnd(R"(\bendmodule\b)");
    static const std::regex kModule(R"(\bmodule\b)");
    std::optional<std::pair<std::size_t, std::size_t>> code; // [open fence, close fence]
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (!is_fence(lines[i])) continue;
        std::size_t j = i + 1;
        std::string body;
        while (j < lines.size() && !is_fence(lines[j])) body += lines[j++] + "\n";
        if (std::regex_search(body, kModule) && std::regex_search(body, kEnd)) code = {{i, j}};
        i = j;
    }
    GenerationParts parts;
    if (!code) {
        parts.crux_text = std::string(text);
        return parts;
    }
    for (std::size_t i = 0; i < code->first; ++i) parts.crux_text += lines[i] + "\n";
    for (std::size_t i = code->first + 1; i < code->second && i < lines.size(); ++i)
        parts.code_text += lines[i] + "\n";
    return parts;
}

} // namespace crux::doc
