#pragma once
// The CRUX document: Module Interface, Core Functions and Key Considerations.
//
// Canonical text form:
//
//   ## Module Interface
//   ```verilog
//   <header block>
//   ```
//
//   ## Core Functions
//   - first line of a block
//     continuation lines are indented by two spaces
//
//   ## Key Considerations
//   - ...
//
// A blank line inside a block is written as a line of exactly two spaces.
// The parser is tolerant: header names are case-insensitive, the singular
// forms are accepted, and unindented paragraphs or nested bullets from model
// output become blocks.

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "crux/verilog_interface.hpp"

namespace crux::doc {

struct CruxDoc {
    verilog::ModuleInterface interface;
    std::vector<std::string> core_functions;
    std::vector<std::string> key_considerations;

    bool operator==(const CruxDoc&) const = default;
};

enum class Section { Interface, CoreFunctions, KeyConsiderations };
std::string_view to_string(Section s);

enum class Severity { Info, Warning, Error };

struct Diagnostic {
    Severity severity;
    std::string message;
    int line; // 1-based; 0 when not tied to a line
};

struct CruxParseReport {
    std::optional<CruxDoc> doc;
    std::set<Section> sections_found;
    bool interface_parsable = false;
    std::optional<verilog::ModuleInterface> interface; // set whenever interface_parsable
    std::vector<Diagnostic> diagnostics;
    // Raw blocks are kept even when `doc` is absent so callers can score partial output.
    std::vector<std::string> core_functions;
    std::vector<std::string> key_considerations;
};

/// Right-trims every line and drops leading/trailing blank lines.
std::string normalize_block(std::string_view block);

/// Empty when `doc` can be rendered canonically.
std::vector<std::string> check_invariants(const CruxDoc& doc);

std::string render_crux(const CruxDoc& doc);

/// Total: never throws on any input. `doc` is set when the interface parses and
/// Core Functions is nonempty; a missing Key Considerations section only warns.
CruxParseReport parse_crux(std::string_view text);

enum class MismatchKind { MissingPort, ExtraPort, Direction, Width };
std::string_view to_string(MismatchKind k);

struct Mismatch {
    MismatchKind kind;
    std::string name;
    std::string expected;
    std::string got;

    bool operator==(const Mismatch&) const = default;
};

/// Port-set, direction and width differences; empty means agreement up to port order.
std::vector<Mismatch> validate_against_reference(const CruxDoc& doc, const verilog::ModuleInterface& ref);

struct GenerationParts {
    std::string crux_text;
    std::string code_text; // empty when no complete module was found
};

/// Splits a (CRUX, code) rollout: the code is the last fenced block holding a
/// complete `module ... endmodule`; everything before that fence is the CRUX.
GenerationParts split_generation(std::string_view text);

} // namespace crux::doc
