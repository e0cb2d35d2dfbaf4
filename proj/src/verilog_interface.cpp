#include "crux/verilog_interface.hpp"

#include <cctype>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>

#include <fmt/format.h>

#include "crux/error.hpp"
#include "crux/util.hpp"

namespace crux::verilog {

std::string_view to_string(Direction d) {
    switch (d) {
    case Direction::Input: return "input";
    case Direction::Output: return "output";
    case Direction::Inout: return "inout";
    }
    return "input";
}

const PortSpec* ModuleInterface::find_port(std::string_view name) const {
    for (const auto& p : ports)
        if (p.name == name) return &p;
    return nullptr;
}

bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    auto c0 = static_cast<unsigned char>(s[0]);
    if (!(std::isalpha(c0) || c0 == '_')) return false;
    for (char ch : s.substr(1)) {
        auto c = static_cast<unsigned char>(ch);
        if (!(std::isalnum(c) || c == '_' || c == '$')) return false;
    }
    return true;
}

std::vector<std::string> check_invariants(const ModuleInterface& iface) {
    std::vector<std::string> problems;
    if (!is_identifier(iface.module_name))
        problems.push_back(fmt::format("module name '{}' is not an identifier", iface.module_name));
    std::set<std::string> seen;
    for (const auto& p : iface.parameters) {
        if (!is_identifier(p.name))
            problems.push_back(fmt::format("parameter name '{}' is not an identifier", p.name));
        if (!seen.insert(p.name).second)
            problems.push_back(fmt::format("duplicate parameter '{}'", p.name));
    }
    std::set<std::string> port_names;
    for (const auto& p : iface.ports) {
        if (!is_identifier(p.name))
            problems.push_back(fmt::format("port name '{}' is not an identifier", p.name));
        if (p.width_bits < 1) problems.push_back(fmt::format("port '{}' has width < 1", p.name));
        if (p.width_bits > 1 && p.range_text.empty())
            problems.push_back(fmt::format("port '{}' has width {} but no range", p.name, p.width_bits));
        if (p.is_reg && p.direction == Direction::Input)
            problems.push_back(fmt::format("input port '{}' declared reg", p.name));
        if (!port_names.insert(p.name).second)
            problems.push_back(fmt::format("duplicate port '{}'", p.name));
        if (seen.count(p.name))
            problems.push_back(fmt::format("port '{}' collides with a parameter", p.name));
    }
    return problems;
}

std::string strip_comments_and_attributes(std::string_view src) {
    std::string out;
    out.reserve(src.size());
    std::size_t i = 0;
    const std::size_t n = src.size();
    while (i < n) {
        char c = src[i];
        if (c == '"') {
            std::size_t j = i + 1;
            while (j < n && src[j] != '"' && src[j] != '\n') j += (src[j] == '\\' && j + 1 < n) ? 2 : 1;
            j = std::min(j + 1, n);
            out.append(src.substr(i, j - i));
            i = j;
        } else if (c == '/' && i + 1 < n && src[i + 1] == '/') {
            while (i < n && src[i] != '\n') ++i;
        } else if (c == '/' && i + 1 < n && src[i + 1] == '*') {
            auto end = src.find("*/", i + 2);
            i = end == std::string_view::npos ? n : end + 2;
            out.push_back(' ');
        } else if (c == '(' && i + 1 < n && src[i + 1] == '*' && !(i + 2 < n && src[i + 2] == ')')) {
            auto end = src.find("*)", i + 2);
            i = end == std::string_view::npos ? n : end + 2;
            out.push_back(' ');
        } else {
            out.push_back(c);
            ++i;
        }
    }
    return out;
}

namespace {

enum class Tok { Ident, Number, Punct, String, Escaped };

struct Token {
    Tok kind;
    std::string text;
};

std::vector<Token> lex(std::string_view s) {
    std::vector<Token> toks;
    std::size_t i = 0;
    const std::size_t n = s.size();
    auto is_ident_char = [](unsigned char c) { return std::isalnum(c) || c == '_' || c == '$'; };
    while (i < n) {
        auto c = static_cast<unsigned char>(s[i]);
        if (std::isspace(c)) {
            ++i;
        } else if (std::isalpha(c) || c == '_' || c == '$') {
            std::size_t j = i + 1;
            while (j < n && is_ident_char(static_cast<unsigned char>(s[j]))) ++j;
            toks.push_back({Tok::Ident, std::string(s.substr(i, j - i))});
            i = j;
        } else if (std::isdigit(c) || c == '\'') {
            // Numbers including sized/based literals such as 8'hFF or 'd3.
            std::size_t j = i;
            while (j < n && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_' || s[j] == '\'' ||
                             s[j] == '.'))
                ++j;
            toks.push_back({Tok::Number, std::string(s.substr(i, j - i))});
            i = j;
        } else if (c == '"') {
            std::size_t j = i + 1;
            while (j < n && s[j] != '"') j += (s[j] == '\\' && j + 1 < n) ? 2 : 1;
            j = std::min(j + 1, n);
            toks.push_back({Tok::String, std::string(s.substr(i, j - i))});
            i = j;
        } else if (c == '\\') {
            std::size_t j = i + 1;
            while (j < n && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
            toks.push_back({Tok::Escaped, std::string(s.substr(i, j - i))});
            i = j;
        } else {
            static const char* kMulti[] = {"<<<", ">>>", "<<", ">>", "+:", "-:", "**", "==", "!=", "<=", ">="};
            bool matched = false;
            for (const char* m : kMulti) {
                std::string_view mv(m);
                if (s.substr(i, mv.size()) == mv) {
                    toks.push_back({Tok::Punct, std::string(mv)});
                    i += mv.size();
                    matched = true;
                    break;
                }
            }
            if (!matched) {
                toks.push_back({Tok::Punct, std::string(1, static_cast<char>(c))});
                ++i;
            }
        }
    }
    return toks;
}

using TokSpan = std::vector<Token>;

bool is_punct(const Token& t, std::string_view p) { return t.kind == Tok::Punct && t.text == p; }
bool is_word(const Token& t, std::string_view w) { return t.kind == Tok::Ident && t.text == w; }

std::string join_tokens(const TokSpan& toks, std::size_t b, std::size_t e, bool spaced) {
    std::string out;
    for (std::size_t i = b; i < e; ++i) {
        if (spaced && !out.empty()) {
            // Space between words, tight around punctuation.
            bool prev_word = toks[i - 1].kind != Tok::Punct;
            bool cur_word = toks[i].kind != Tok::Punct;
            if (prev_word && cur_word) out.push_back(' ');
            else if (!(toks[i].kind == Tok::Punct && (toks[i].text == ")" || toks[i].text == "]" ||
                                                      toks[i].text == "," || toks[i].text == "(" ||
                                                      toks[i].text == "[")) &&
                     !(toks[i - 1].kind == Tok::Punct &&
                       (toks[i - 1].text == "(" || toks[i - 1].text == "[")))
                out.push_back(' ');
        }
        out += toks[i].text;
    }
    return out;
}

// Splits [b, e) at depth-0 commas.
std::vector<std::pair<std::size_t, std::size_t>> split_commas(const TokSpan& toks, std::size_t b,
                                                              std::size_t e) {
    std::vector<std::pair<std::size_t, std::size_t>> items;
    int depth = 0;
    std::size_t start = b;
    for (std::size_t i = b; i < e; ++i) {
        const auto& t = toks[i];
        if (t.kind != Tok::Punct) continue;
        if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
        else if (t.text == ")" || t.text == "]" || t.text == "}") --depth;
        else if (t.text == "," && depth == 0) {
            items.emplace_back(start, i);
            start = i + 1;
        }
    }
    if (start < e || !items.empty()) items.emplace_back(start, e);
    return items;
}

// Index of the token closing the bracket opened at `open`, or npos.
std::size_t match_close(const TokSpan& toks, std::size_t open) {
    const std::string& o = toks[open].text;
    const std::string c = o == "(" ? ")" : o == "[" ? "]" : "}";
    int depth = 0;
    for (std::size_t i = open; i < toks.size(); ++i) {
        if (is_punct(toks[i], o)) ++depth;
        else if (is_punct(toks[i], c) && --depth == 0) return i;
    }
    return std::string::npos;
}

// Integer constant expressions over literals and integer parameters, for range bounds.
class ConstEval {
public:
    ConstEval(const std::map<std::string, std::string>& params) : params_(params) {}

    std::optional<long long> eval_text(const std::string& text) {
        auto toks = lex(text);
        return eval_tokens(toks, 0, toks.size());
    }

    std::optional<long long> eval_tokens(const TokSpan& toks, std::size_t b, std::size_t e) {
        toks_ = &toks;
        pos_ = b;
        end_ = e;
        auto v = parse_shift();
        if (!v || pos_ != end_) return std::nullopt;
        return v;
    }

private:
    const std::map<std::string, std::string>& params_;
    std::set<std::string> active_;
    const TokSpan* toks_ = nullptr;
    std::size_t pos_ = 0, end_ = 0;

    bool peek(std::string_view p) const { return pos_ < end_ && is_punct((*toks_)[pos_], p); }

    std::optional<long long> parse_shift() {
        auto lhs = parse_add();
        while (lhs && (peek("<<") || peek(">>"))) {
            bool left = peek("<<");
            ++pos_;
            auto rhs = parse_add();
            if (!rhs || *rhs < 0 || *rhs > 62) return std::nullopt;
            lhs = left ? (*lhs << *rhs) : (*lhs >> *rhs);
        }
        return lhs;
    }
    std::optional<long long> parse_add() {
        auto lhs = parse_mul();
        while (lhs && (peek("+") || peek("-"))) {
            bool plus = peek("+");
            ++pos_;
            auto rhs = parse_mul();
            if (!rhs) return std::nullopt;
            lhs = plus ? *lhs + *rhs : *lhs - *rhs;
        }
        return lhs;
    }
    std::optional<long long> parse_mul() {
        auto lhs = parse_unary();
        while (lhs && (peek("*") || peek("/") || peek("%"))) {
            char op = (*toks_)[pos_].text[0];
            ++pos_;
            auto rhs = parse_unary();
            if (!rhs) return std::nullopt;
            if (op == '*') lhs = *lhs * *rhs;
            else {
                if (*rhs == 0) return std::nullopt;
                lhs = op == '/' ? *lhs / *rhs : *lhs % *rhs;
            }
        }
        return lhs;
    }
    std::optional<long long> parse_unary() {
        if (peek("-")) {
            ++pos_;
            auto v = parse_unary();
            return v ? std::optional<long long>(-*v) : std::nullopt;
        }
        if (peek("+")) {
            ++pos_;
            return parse_unary();
        }
        return parse_primary();
    }
    std::optional<long long> parse_primary() {
        if (pos_ >= end_) return std::nullopt;
        const Token& t = (*toks_)[pos_];
        if (is_punct(t, "(")) {
            ++pos_;
            auto v = parse_shift();
            if (!v || !peek(")")) return std::nullopt;
            ++pos_;
            return v;
        }
        if (t.kind == Tok::Number) {
            ++pos_;
            return parse_number(t.text);
        }
        if (t.kind == Tok::Ident) {
            ++pos_;
            if (t.text == "$clog2") {
                if (!peek("(")) return std::nullopt;
                ++pos_;
                auto v = parse_shift();
                if (!v || !peek(")")) return std::nullopt;
                ++pos_;
                long long r = 0;
                while ((1LL << r) < *v) ++r;
                return r;
            }
            auto it = params_.find(t.text);
            if (it == params_.end() || active_.count(t.text)) return std::nullopt;
            active_.insert(t.text);
            auto saved_toks = toks_;
            auto saved_pos = pos_, saved_end = end_;
            auto inner = lex(it->second);
            auto v = eval_tokens(inner, 0, inner.size());
            toks_ = saved_toks;
            pos_ = saved_pos;
            end_ = saved_end;
            active_.erase(t.text);
            return v;
        }
        return std::nullopt;
    }

    static std::optional<long long> parse_number(const std::string& raw) {
        std::string s;
        for (char c : raw)
            if (c != '_') s.push_back(c);
        auto tick = s.find('\'');
        int base = 10;
        std::string digits = s;
        if (tick != std::string::npos) {
            std::size_t k = tick + 1;
            if (k < s.size() && (s[k] == 's' || s[k] == 'S')) ++k;
            if (k >= s.size()) return std::nullopt;
            switch (std::tolower(static_cast<unsigned char>(s[k]))) {
            case 'd': base = 10; break;
            case 'h': base = 16; break;
            case 'b': base = 2; break;
            case 'o': base = 8; break;
            default: return std::nullopt;
            }
            digits = s.substr(k + 1);
        }
        if (digits.empty()) return std::nullopt;
        char* endp = nullptr;
        long long v = std::strtoll(digits.c_str(), &endp, base);
        if (*endp != '\0') return std::nullopt;
        return v;
    }
};

[[noreturn]] void malformed(const std::string& msg) { throw Error(ErrorCode::MalformedHeader, msg); }
[[noreturn]] void unsupported(const std::string& msg) { throw Error(ErrorCode::UnsupportedSyntax, msg); }

bool is_type_keyword(const std::string& w) {
    static const std::set<std::string> kTypes = {"integer", "real", "realtime", "time", "int", "bit",
                                                 "byte", "shortint", "longint", "string", "unsigned"};
    return kTypes.count(w) > 0;
}

std::vector<Parameter> parse_parameters(const TokSpan& toks, std::size_t b, std::size_t e) {
    std::vector<Parameter> params;
    for (auto [ib, ie] : split_commas(toks, b, e)) {
        std::size_t i = ib;
        if (i >= ie) malformed("empty parameter declaration");
        if (is_word(toks[i], "parameter") || is_word(toks[i], "localparam")) ++i;
        while (i < ie && toks[i].kind == Tok::Ident && (is_type_keyword(toks[i].text) || toks[i].text == "signed"))
            ++i;
        if (i < ie && is_punct(toks[i], "[")) {
            auto close = match_close(toks, i);
            if (close == std::string::npos || close >= ie) malformed("unbalanced range in parameter");
            i = close + 1;
        }
        if (i >= ie || toks[i].kind != Tok::Ident) malformed("parameter name expected");
        std::string name = toks[i].text;
        ++i;
        if (i >= ie || !is_punct(toks[i], "=")) malformed(fmt::format("parameter '{}' has no default", name));
        ++i;
        if (i >= ie) malformed(fmt::format("parameter '{}' has an empty default", name));
        params.push_back({name, join_tokens(toks, i, ie, true)});
    }
    return params;
}

struct PortDecl {
    std::optional<Direction> direction;
    bool is_reg = false;
    bool is_signed = false;
    bool has_type = false;
    std::string range_text;
    std::size_t range_b = 0, range_e = 0; // tokens strictly inside the brackets
    std::string name;
};

std::vector<PortSpec> parse_ports(const TokSpan& toks, std::size_t b, std::size_t e,
                                  const std::vector<Parameter>& params) {
    std::map<std::string, std::string> param_map;
    for (const auto& p : params) param_map[p.name] = p.default_value;

    std::vector<PortSpec> ports;
    if (b == e) return ports;
    auto items = split_commas(toks, b, e);

    // Non-ANSI lists name the ports only; directions live in the module body.
    bool all_bare = true;
    for (auto [ib, ie] : items)
        if (!(ie == ib + 1 && toks[ib].kind == Tok::Ident)) all_bare = false;
    if (all_bare && !(toks[items[0].first].text == "input" || toks[items[0].first].text == "output" ||
                      toks[items[0].first].text == "inout"))
        unsupported("non-ANSI port list (directions declared in the module body)");

    std::optional<PortSpec> prev;
    for (auto [ib, ie] : items) {
        if (ib >= ie) malformed("empty port declaration");
        PortDecl d;
        std::size_t i = ib;
        if (is_punct(toks[i], ".")) unsupported("explicit port expression");
        if (toks[i].kind == Tok::Ident) {
            const auto& w = toks[i].text;
            if (w == "input") d.direction = Direction::Input;
            else if (w == "output") d.direction = Direction::Output;
            else if (w == "inout") d.direction = Direction::Inout;
            if (d.direction) ++i;
        }
        while (i < ie && toks[i].kind == Tok::Ident) {
            const auto& w = toks[i].text;
            if (w == "reg") {
                d.is_reg = true;
                d.has_type = true;
            } else if (w == "wire" || w == "tri" || w == "wand" || w == "wor" || w == "supply0" ||
                       w == "supply1" || w == "tri0" || w == "tri1") {
                d.has_type = true;
            } else if (w == "signed") {
                d.is_signed = true;
                d.has_type = true;
            } else if (w == "logic" || w == "var" || is_type_keyword(w)) {
                unsupported(fmt::format("port data type '{}'", w));
            } else {
                break;
            }
            ++i;
        }
        if (i < ie && is_punct(toks[i], "[")) {
            auto close = match_close(toks, i);
            if (close == std::string::npos || close >= ie) malformed("unbalanced range in port declaration");
            d.range_b = i + 1;
            d.range_e = close;
            d.range_text = join_tokens(toks, i, close + 1, false);
            i = close + 1;
            if (i < ie && is_punct(toks[i], "[")) unsupported("multiple packed dimensions");
        }
        if (i >= ie) malformed("port name expected");
        if (toks[i].kind == Tok::Escaped) unsupported("escaped identifier " + toks[i].text);
        if (toks[i].kind != Tok::Ident) malformed(fmt::format("unexpected '{}' in port list", toks[i].text));
        d.name = toks[i].text;
        ++i;
        if (i < ie && is_punct(toks[i], "[")) unsupported(fmt::format("unpacked dimension on port '{}'", d.name));
        if (i < ie && !is_punct(toks[i], "="))
            malformed(fmt::format("unexpected '{}' after port '{}'", toks[i].text, d.name));

        PortSpec port;
        if (!d.direction) {
            if (!prev) malformed(fmt::format("port '{}' has no direction", d.name));
            if (!d.has_type && d.range_text.empty()) {
                port = *prev;
                port.name = d.name;
                ports.push_back(port);
                continue;
            }
            d.direction = prev->direction;
        }
        port.name = d.name;
        port.direction = *d.direction;
        port.is_reg = d.is_reg;
        port.is_signed = d.is_signed;
        port.range_text = d.range_text;
        if (port.is_reg && port.direction == Direction::Input)
            malformed(fmt::format("input port '{}' cannot be declared reg", port.name));
        if (d.range_text.empty()) {
            port.width_bits = 1;
        } else {
            std::size_t colon = std::string::npos;
            int depth = 0;
            for (std::size_t k = d.range_b; k < d.range_e; ++k) {
                const auto& t = toks[k];
                if (t.kind != Tok::Punct) continue;
                if (t.text == "(" || t.text == "[" || t.text == "{") ++depth;
                else if (t.text == ")" || t.text == "]" || t.text == "}") --depth;
                else if (t.text == "+:" || t.text == "-:") unsupported("indexed part-select in port range");
                else if (t.text == ":" && depth == 0) {
                    if (colon != std::string::npos) malformed("range with more than one ':'");
                    colon = k;
                }
            }
            if (colon == std::string::npos) unsupported(fmt::format("range '{}' is not [H:L]", d.range_text));
            ConstEval ev(param_map);
            auto hi = ev.eval_tokens(toks, d.range_b, colon);
            auto lo = ev.eval_tokens(toks, colon + 1, d.range_e);
            if (!hi || !lo)
                unsupported(fmt::format("cannot evaluate range '{}' of port '{}'", d.range_text, port.name));
            port.width_bits = static_cast<int>(std::llabs(*hi - *lo) + 1);
        }
        ports.push_back(port);
        prev = port;
    }
    return ports;
}

} // namespace

ModuleInterface parse_module_header(std::string_view source, std::optional<std::string_view> module_name) {
    auto toks = lex(strip_comments_and_attributes(source));
    std::size_t i = 0;
    for (;; ++i) {
        while (i < toks.size() && !(is_word(toks[i], "module") || is_word(toks[i], "macromodule"))) ++i;
        if (i >= toks.size()) {
            if (module_name) throw Error(ErrorCode::NoModuleFound, fmt::format("no module named '{}'", *module_name));
            throw Error(ErrorCode::NoModuleFound, "no module declaration found");
        }
        if (!module_name) break;
        if (i + 1 < toks.size() && toks[i + 1].text == *module_name) break;
    }
    ++i;
    if (i >= toks.size()) malformed("module name expected");
    if (toks[i].kind == Tok::Escaped) unsupported("escaped module name");
    if (toks[i].kind != Tok::Ident || !is_identifier(toks[i].text)) malformed("module name expected");

    ModuleInterface iface;
    iface.module_name = toks[i].text;
    ++i;

    if (i < toks.size() && is_punct(toks[i], "#")) {
        ++i;
        if (i >= toks.size() || !is_punct(toks[i], "(")) malformed("'(' expected after '#'");
        auto close = match_close(toks, i);
        if (close == std::string::npos) malformed("unbalanced parameter list parentheses");
        iface.parameters = parse_parameters(toks, i + 1, close);
        i = close + 1;
    }

    if (i < toks.size() && is_punct(toks[i], ";")) {
        return iface;
    }
    if (i >= toks.size() || !is_punct(toks[i], "(")) malformed("'(' expected after module name");
    auto close = match_close(toks, i);
    if (close == std::string::npos) malformed("unbalanced port list parentheses");
    iface.ports = parse_ports(toks, i + 1, close, iface.parameters);
    i = close + 1;
    if (i >= toks.size() || !is_punct(toks[i], ";")) malformed("';' expected after port list");

    std::set<std::string> names;
    for (const auto& p : iface.parameters)
        if (!names.insert(p.name).second) malformed(fmt::format("duplicate parameter '{}'", p.name));
    for (const auto& p : iface.ports)
        if (!names.insert(p.name).second) malformed(fmt::format("duplicate name '{}'", p.name));
    return iface;
}

namespace {

std::string port_decl(const PortSpec& p) {
    std::string s(to_string(p.direction));
    if (p.is_reg) s += " reg";
    if (p.is_signed) s += " signed";
    if (!p.range_text.empty()) s += " " + p.range_text;
    else if (p.width_bits > 1) s += fmt::format(" [{}:0]", p.width_bits - 1);
    s += " " + p.name;
    return s;
}

std::string prose_port(const PortSpec& p, bool keep_dir, bool keep_width) {
    std::string s = "- ";
    if (keep_dir) s += std::string(to_string(p.direction)) + " ";
    s += p.name;
    if (keep_width && p.width_bits > 1) s += fmt::format(" ({} bits)", p.width_bits);
    return s;
}

} // namespace

std::string render_interface(const ModuleInterface& iface, RenderStyle style) {
    std::string out;
    if (style == RenderStyle::ProseList) {
        for (const auto& p : iface.parameters) out += fmt::format("- parameter {} = {}\n", p.name, p.default_value);
        for (const auto& p : iface.ports) out += prose_port(p, true, true) + "\n";
        return out;
    }
    out = "module " + iface.module_name;
    if (!iface.parameters.empty()) {
        out += " #(\n";
        for (std::size_t k = 0; k < iface.parameters.size(); ++k) {
            const auto& p = iface.parameters[k];
            out += fmt::format("    parameter {} = {}{}\n", p.name, p.default_value,
                               k + 1 < iface.parameters.size() ? "," : "");
        }
        out += ")";
    }
    if (iface.ports.empty()) {
        out += " ();";
        return out;
    }
    out += " (\n";
    for (std::size_t k = 0; k < iface.ports.size(); ++k)
        out += "    " + port_decl(iface.ports[k]) + (k + 1 < iface.ports.size() ? ",\n" : "\n");
    out += ");";
    return out;
}

DegradedInterface degrade_interface(const ModuleInterface& iface, const DegradationPolicy& policy,
                                    std::uint64_t rng_seed) {
    DegradedInterface out;
    out.source = iface;
    Rng rng(rng_seed);
    out.fully_retained = rng.bernoulli(policy.p_full_retain);
    for (const auto& port : iface.ports) {
        // Three draws per port regardless of outcome keep the streams aligned.
        bool include = rng.bernoulli(policy.p_keep_element);
        bool keep_dir = rng.bernoulli(policy.p_keep_element);
        bool keep_width = rng.bernoulli(policy.p_keep_element);
        if (out.fully_retained) {
            out.retained_ports.push_back({port, kKeepAll});
            continue;
        }
        if (!include) continue;
        std::uint8_t mask = kKeepName;
        if (keep_dir || port.direction == Direction::Inout) mask |= kKeepDirection;
        if (keep_width) mask |= kKeepWidth;
        out.retained_ports.push_back({port, mask});
    }
    return out;
}

std::string render_degraded(const DegradedInterface& degraded) {
    const auto& src = degraded.source;
    std::string out = "Module name: " + src.module_name + "\n";
    if (!src.parameters.empty()) {
        out += "Parameters:\n";
        for (const auto& p : src.parameters) out += fmt::format("- {} = {}\n", p.name, p.default_value);
    }
    if (!degraded.retained_ports.empty()) {
        out += "Ports:\n";
        for (const auto& rp : degraded.retained_ports)
            out += prose_port(rp.port, rp.keeps(kKeepDirection), rp.keeps(kKeepWidth)) + "\n";
    }
    return out;
}

} // namespace crux::verilog
