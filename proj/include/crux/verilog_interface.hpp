#pragma once
// Verilog module headers: parsing into a structured interface, rendering back
// to source or prose, and seeded interface degradation.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace crux::verilog {

enum class Direction { Input, Output, Inout };

std::string_view to_string(Direction d);

struct PortSpec {
    std::string name;
    Direction direction = Direction::Input;
    int width_bits = 1;
    bool is_reg = false;
    bool is_signed = false;
    std::string range_text; // e.g. "[7:0]", whitespace removed; empty when no range

    bool operator==(const PortSpec&) const = default;
};

struct Parameter {
    std::string name;
    std::string default_value; // raw text, never evaluated

    bool operator==(const Parameter&) const = default;
};

struct ModuleInterface {
    std::string module_name;
    std::vector<Parameter> parameters;
    std::vector<PortSpec> ports;

    const PortSpec* find_port(std::string_view name) const;
    bool operator==(const ModuleInterface&) const = default;
};

bool is_identifier(std::string_view s);

/// Empty when valid; otherwise one message per violated invariant.
std::vector<std::string> check_invariants(const ModuleInterface& iface);

/// Parses the first module header in `source`, or the one named `module_name`.
/// Throws Error with NoModuleFound, MalformedHeader or UnsupportedSyntax.
ModuleInterface parse_module_header(std::string_view source,
                                    std::optional<std::string_view> module_name = std::nullopt);

/// Removes `//` and `/* */` comments and `(* attribute *)` blocks; string literals are kept.
std::string strip_comments_and_attributes(std::string_view source);

enum class RenderStyle { HeaderBlock, ProseList };

std::string render_interface(const ModuleInterface& iface, RenderStyle style);

// Degradation ------------------------------------------------------------

enum FieldMask : std::uint8_t {
    kKeepName = 1u << 0,
    kKeepDirection = 1u << 1,
    kKeepWidth = 1u << 2,
    kKeepAll = kKeepName | kKeepDirection | kKeepWidth,
};

struct DegradationPolicy {
    double p_full_retain = 0.2;
    double p_keep_element = 0.5;
};

struct RetainedPort {
    PortSpec port;
    std::uint8_t kept_fields = kKeepAll;

    bool keeps(FieldMask f) const { return (kept_fields & f) != 0; }
    bool operator==(const RetainedPort&) const = default;
};

struct DegradedInterface {
    ModuleInterface source;
    std::vector<RetainedPort> retained_ports;
    bool fully_retained = false;

    bool operator==(const DegradedInterface&) const = default;
};

/// Pure function of its arguments. `inout` ports never lose their direction.
DegradedInterface degrade_interface(const ModuleInterface& iface, const DegradationPolicy& policy,
                                    std::uint64_t rng_seed);

/// Prose rendering of a degraded interface for RealSpec text: the module name,
/// parameters, then one `- [direction] name [(N bits)]` line per retained port.
std::string render_degraded(const DegradedInterface& degraded);

} // namespace crux::verilog
