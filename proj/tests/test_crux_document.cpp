#include <doctest.h>

#include <algorithm>

#include "crux/crux_document.hpp"
#include "crux/util.hpp"
#include "test_support.hpp"

using namespace crux;
using namespace crux::doc;

namespace {

CruxDoc dff8p_doc() {
    CruxDoc d;
    d.interface = verilog::parse_module_header(
        "module TopModule (input clk, input reset, input [7:0] d, output reg [7:0] q);");
    d.core_functions = {"Implements 8 D flip-flops with synchronous reset", "Reset value is 0x34",
                        "Negative edge-triggered"};
    d.key_considerations = {"Reset is checked only on the falling edge"};
    return d;
}

bool has_diag_mentioning(const CruxParseReport& r, std::string_view word) {
    return std::any_of(r.diagnostics.begin(), r.diagnostics.end(), [&](const Diagnostic& d) {
        return to_lower(d.message).find(to_lower(word)) != std::string::npos;
    });
}

// Random block text: words, bullets, arrows, blank lines, odd spacing.
std::string random_block(Rng& rng) {
    static const char* kWords[] = {"state", "S1", "->", "→", "reset", "x = 1", "0x34", "`q`", "*bold*", "if", "(a & b)", "K-map"};
    std::string out;
    int lines = 1 + static_cast<int>(rng.index(4));
    for (int l = 0; l < lines; ++l) {
        if (l > 0) out += rng.bernoulli(0.2) ? "\n\n" : "\n";
        if (l > 0 && rng.bernoulli(0.3)) out += "- ";
        int words = 1 + static_cast<int>(rng.index(6));
        for (int w = 0; w < words; ++w) {
            if (w) out += " ";
            out += kWords[rng.index(std::size(kWords))];
        }
    }
    return normalize_block(out);
}

} // namespace

TEST_CASE("render dff8p") {
    auto text = render_crux(dff8p_doc());
    CHECK(text.find("## Module Interface\n```verilog\nmodule TopModule (") != std::string::npos);
    CHECK(text.find("- Implements 8 D flip-flops with synchronous reset\n") != std::string::npos);
    CHECK(text.find("- Reset value is 0x34\n") != std::string::npos);
    CHECK(text.find("- Negative edge-triggered\n") != std::string::npos);
    CHECK(text == render_crux(dff8p_doc()));
}

TEST_CASE("empty key considerations keeps the header") {
    auto d = dff8p_doc();
    d.key_considerations.clear();
    auto text = render_crux(d);
    CHECK(text.find("## Key Considerations") != std::string::npos);
    auto r = parse_crux(text);
    REQUIRE(r.doc);
    CHECK(*r.doc == d);
    CHECK(r.sections_found.size() == 3);
}

TEST_CASE("canonical parse finds all sections") {
    auto r = parse_crux(render_crux(dff8p_doc()));
    REQUIRE(r.doc);
    CHECK(*r.doc == dff8p_doc());
    CHECK(r.sections_found == std::set<Section>{Section::Interface, Section::CoreFunctions, Section::KeyConsiderations});
    CHECK(r.interface_parsable);
    REQUIRE(r.interface);
    CHECK(*r.interface == dff8p_doc().interface);
}

TEST_CASE("empty text") {
    auto r = parse_crux("");
    CHECK_FALSE(r.doc);
    CHECK(r.sections_found.empty());
    CHECK_FALSE(r.interface_parsable);
}

TEST_CASE("missing key considerations header is reported") {
    auto text = render_crux(dff8p_doc());
    text = text.substr(0, text.find("## Key Considerations"));
    auto r = parse_crux(text);
    CHECK(r.sections_found.count(Section::KeyConsiderations) == 0);
    CHECK(has_diag_mentioning(r, "Key Considerations"));
    // Still usable: interface and core functions are enough for a document.
    REQUIRE(r.doc);
    CHECK(r.doc->key_considerations.empty());
}

TEST_CASE("missing core functions gives no doc") {
    auto text = render_crux(dff8p_doc());
    auto a = text.find("## Core Functions"), b = text.find("## Key Considerations");
    text.erase(a, b - a);
    auto r = parse_crux(text);
    CHECK_FALSE(r.doc);
    CHECK(has_diag_mentioning(r, "Core Functions"));
    CHECK(r.interface_parsable);
}

TEST_CASE("unparsable interface gives no doc but keeps blocks") {
    auto text = render_crux(dff8p_doc());
    auto pos = text.find(");");
    text.replace(pos, 2, ")");
    auto r = parse_crux(text);
    CHECK_FALSE(r.doc);
    CHECK_FALSE(r.interface_parsable);
    CHECK(r.core_functions.size() == 3);
}

TEST_CASE("header synonyms and case") {
    std::string text =
        "### module interface\n```\nmodule m(input a, output b);\n```\n\n**CORE FUNCTION**\n- passes a to b\n\n"
        "Key considerations:\n- none really\n";
    auto r = parse_crux(text);
    REQUIRE(r.doc);
    CHECK(r.doc->interface.module_name == "m");
    CHECK(r.doc->core_functions == std::vector<std::string>{"passes a to b"});
    CHECK(r.doc->key_considerations == std::vector<std::string>{"none really"});
}

TEST_CASE("appendix examples parse with exact interfaces") {
    using testing_support::source_path;
    {
        auto r = parse_crux(read_text_file(source_path("data/fixtures/appendix/dff8p.md")));
        REQUIRE(r.doc);
        const auto& i = r.doc->interface;
        CHECK(i.module_name == "TopModule");
        REQUIRE(i.ports.size() == 4);
        CHECK(i.ports[2].width_bits == 8);
        CHECK(i.ports[3].is_reg);
        CHECK(r.doc->core_functions.size() == 3);
        CHECK(r.doc->core_functions[1] == "Reset value is 0x34");
        auto again = parse_crux(render_crux(*r.doc));
        REQUIRE(again.doc);
        CHECK(*again.doc == *r.doc);
    }
    {
        auto r = parse_crux(read_text_file(source_path("data/fixtures/appendix/clkgenerator.md")));
        REQUIRE(r.doc);
        REQUIRE(r.doc->interface.parameters.size() == 1);
        CHECK(r.doc->interface.parameters[0].default_value == "10");
        CHECK(r.doc->core_functions.size() == 4);
    }
    {
        auto r = parse_crux(read_text_file(source_path("data/fixtures/appendix/ece241_2013_q8.md")));
        REQUIRE(r.doc);
        CHECK(r.doc->interface.ports.size() == 4);
        CHECK(r.doc->key_considerations.size() == 1);
        // paragraph plus three nested-bullet groups
        CHECK(r.doc->core_functions.size() == 4);
        CHECK(r.doc->core_functions[1].find("On input x = 1, transition to S1.") != std::string::npos);
        auto again = parse_crux(render_crux(*r.doc));
        REQUIRE(again.doc);
        CHECK(*again.doc == *r.doc);
    }
}

TEST_CASE("property: render/parse round trip") {
    Rng rng(5);
    const char* headers[] = {"module a(input x, output y);", "module b #(parameter N = 4)(input [N-1:0] d, output reg q);",
                             "module c();", "module TopModule (input clk, input reset, input [7:0] d, output reg [7:0] q);"};
    for (int t = 0; t < 400; ++t) {
        CruxDoc d;
        d.interface = verilog::parse_module_header(headers[rng.index(4)]);
        int ncf = 1 + static_cast<int>(rng.index(4)), nkc = static_cast<int>(rng.index(3));
        for (int i = 0; i < ncf; ++i) d.core_functions.push_back(random_block(rng));
        for (int i = 0; i < nkc; ++i) d.key_considerations.push_back(random_block(rng));
        if (!check_invariants(d).empty()) continue;
        auto text = render_crux(d);
        auto r = parse_crux(text);
        INFO(text);
        REQUIRE(r.doc);
        CHECK(*r.doc == d);
        CHECK(render_crux(*r.doc) == text);
    }
}

TEST_CASE("property: parse is total on random bytes") {
    Rng rng(77);
    const std::string alphabet = "#*`-\n ()[]:;,moduleinputoutputreg{}\x01\xff\xe2\x86\x92";
    for (int t = 0; t < 2000; ++t) {
        std::string s;
        auto len = rng.index(300);
        for (std::size_t i = 0; i < len; ++i)
            s.push_back(rng.bernoulli(0.1) ? static_cast<char>(rng.index(256)) : alphabet[rng.index(alphabet.size())]);
        if (rng.bernoulli(0.3)) s = "## Module Interface\n```\n" + s;
        CHECK_NOTHROW(parse_crux(s));
    }
}

TEST_CASE("validate against reference") {
    auto d = dff8p_doc();
    CHECK(validate_against_reference(d, d.interface).empty());

    auto missing = d;
    missing.interface.ports.erase(missing.interface.ports.begin() + 1);
    auto m = validate_against_reference(missing, d.interface);
    REQUIRE(m.size() == 1);
    CHECK(m[0].kind == MismatchKind::MissingPort);
    CHECK(m[0].name == "reset");

    auto wide = d;
    wide.interface.ports[2].width_bits = 16;
    wide.interface.ports[2].range_text = "[15:0]";
    auto w = validate_against_reference(wide, d.interface);
    REQUIRE(w.size() == 1);
    CHECK(w[0] == Mismatch{MismatchKind::Width, "d", "8", "16"});

    auto reordered = d;
    std::reverse(reordered.interface.ports.begin(), reordered.interface.ports.end());
    CHECK(validate_against_reference(reordered, d.interface).empty());

    auto flipped = d;
    flipped.interface.ports[0].direction = verilog::Direction::Output;
    auto f = validate_against_reference(flipped, d.interface);
    REQUIRE(f.size() == 1);
    CHECK(f[0].kind == MismatchKind::Direction);

    auto extra = d;
    extra.interface.ports.push_back({"dbg", verilog::Direction::Output, 1});
    auto e = validate_against_reference(extra, d.interface);
    REQUIRE(e.size() == 1);
    CHECK(e[0].kind == MismatchKind::ExtraPort);
}

TEST_CASE("invariants: core functions must be nonempty") {
    auto d = dff8p_doc();
    d.core_functions.clear();
    CHECK_FALSE(check_invariants(d).empty());
}

TEST_CASE("normalize_block") {
    CHECK(normalize_block("\n\n  a  \nb\t\n\n") == "  a\nb");
    CHECK(normalize_block("   \n").empty());
}

TEST_CASE("split_generation takes the last complete module") {
    std::string gen = "## Module Interface\n```verilog\nmodule m(input a, output b);\n```\n## Core Functions\n- wire\n"
                      "## Key Considerations\n- none\n\n```verilog\nmodule m(input a, output b);\n  assign b = a;\nendmodule\n```\n";
    auto parts = split_generation(gen);
    CHECK(parts.code_text.find("assign b = a;") != std::string::npos);
    CHECK(parts.code_text.find("endmodule") != std::string::npos);
    CHECK(parts.crux_text.find("## Key Considerations") != std::string::npos);
    CHECK(parts.crux_text.find("assign") == std::string::npos);
    REQUIRE(parse_crux(parts.crux_text).doc);

    auto none = split_generation("just prose, no code");
    CHECK(none.code_text.empty());
    CHECK(none.crux_text == "just prose, no code");
}
