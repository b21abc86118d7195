#pragma once

/// @file rulelang.hpp
/// @brief Parser, matcher and payload rewriter for the inline signature
/// language. The grammar is documented in docs/rule-grammar.md.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "honeynet/netmodel.hpp"

namespace honeynet {

enum class RuleAction : std::uint8_t { Alert };
enum class RuleProtocol : std::uint8_t { Ip, Tcp, Udp };

struct AddrSpec {
    enum class Kind : std::uint8_t { Honeynet, ExternalNet, Any, Block };
    Kind kind = Kind::Any;
    Cidr block{};

    static AddrSpec honeynet() { return {Kind::Honeynet, {}}; }
    static AddrSpec external_net() { return {Kind::ExternalNet, {}}; }
    static AddrSpec any() { return {Kind::Any, {}}; }
    static AddrSpec cidr(Cidr c) { return {Kind::Block, c}; }

    bool matches(Ipv4 ip, const NetConfig& cfg) const {
        switch (kind) {
            case Kind::Honeynet: return cfg.in_honeynet(ip);
            case Kind::ExternalNet: return !cfg.in_honeynet(ip);
            case Kind::Any: return true;
            case Kind::Block: return block.contains(ip);
        }
        return false;
    }

    friend bool operator==(const AddrSpec& a, const AddrSpec& b) {
        return a.kind == b.kind && (a.kind != Kind::Block || a.block == b.block);
    }
};

struct PortSpec {
    std::optional<std::uint16_t> port;  // nullopt means `any`

    bool matches(std::uint16_t p) const { return !port || *port == p; }
    bool operator==(const PortSpec&) const = default;
};

struct Rule {
    RuleAction action = RuleAction::Alert;
    RuleProtocol protocol = RuleProtocol::Ip;
    AddrSpec src_addr;
    PortSpec src_port;
    AddrSpec dst_addr;
    PortSpec dst_port;
    std::string msg;
    std::uint32_t sid = 0;
    std::uint32_t rev = 1;
    Bytes content;
    std::optional<Bytes> replace;

    bool operator==(const Rule&) const = default;
};

struct RuleSet {
    std::vector<Rule> rules;

    const Rule* find(std::uint32_t sid) const {
        auto it = std::find_if(rules.begin(), rules.end(), [&](const Rule& r) { return r.sid == sid; });
        return it == rules.end() ? nullptr : &*it;
    }
    bool empty() const { return rules.empty(); }
    std::size_t size() const { return rules.size(); }

    bool operator==(const RuleSet&) const = default;
};

class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, std::size_t column, std::string reason)
        : std::runtime_error(std::to_string(line) + ":" + std::to_string(column) + ": " + reason),
          line_(line), column_(column), reason_(std::move(reason)) {}

    std::size_t line() const { return line_; }
    std::size_t column() const { return column_; }
    const std::string& reason() const { return reason_; }

private:
    std::size_t line_;
    std::size_t column_;
    std::string reason_;
};

/// Error inside a pattern; `offset` is the 0-based index into the pattern text.
class PatternError : public std::runtime_error {
public:
    PatternError(std::size_t offset, const std::string& reason) : std::runtime_error(reason), offset_(offset) {}
    std::size_t offset() const { return offset_; }

private:
    std::size_t offset_;
};

/// Decodes the inside of a quoted content/replace value: literal characters
/// stand for their byte values, `|41 42|` spans hold hex bytes, and a
/// backslash escapes one of `" \ ; : |`.
inline Bytes parse_pattern(std::string_view text) {
    Bytes out;
    std::size_t i = 0;
    while (i < text.size()) {
        char c = text[i];
        if (c == '\\') {
            if (i + 1 >= text.size()) throw PatternError(i, "dangling escape");
            char e = text[i + 1];
            if (e != '"' && e != '\\' && e != ';' && e != ':' && e != '|')
                throw PatternError(i, std::string("invalid escape '\\") + e + "'");
            out.push_back(static_cast<std::uint8_t>(e));
            i += 2;
        } else if (c == '|') {
            std::size_t open = i++;
            std::size_t digits = 0;
            int hi = -1;
            bool closed = false;
            while (i < text.size()) {
                char h = text[i];
                if (h == '|') {
                    closed = true;
                    ++i;
                    break;
                }
                if (h == ' ' || h == '\t') {
                    if (hi >= 0) throw PatternError(i, "malformed hex span: split hex byte");
                    ++i;
                    continue;
                }
                int v = hex_value(h);
                if (v < 0) throw PatternError(i, std::string("malformed hex span: non-hex digit '") + h + "'");
                if (hi < 0) {
                    hi = v;
                } else {
                    out.push_back(static_cast<std::uint8_t>((hi << 4) | v));
                    hi = -1;
                }
                ++digits;
                ++i;
            }
            if (!closed) throw PatternError(open, "malformed hex span: unterminated '|'");
            if (hi >= 0) throw PatternError(open, "malformed hex span: odd number of hex digits");
            if (digits == 0) throw PatternError(open, "malformed hex span: empty");
        } else {
            out.push_back(static_cast<std::uint8_t>(c));
            ++i;
        }
    }
    return out;
}

/// Canonical pattern text: fully printable patterns are written literally,
/// anything else as a single uppercase hex span.
inline std::string render_pattern(std::span<const std::uint8_t> bytes) {
    static constexpr char kDigits[] = "0123456789ABCDEF";
    auto literal = [](std::uint8_t b) {
        return b >= 0x20 && b <= 0x7E && b != '"' && b != '\\' && b != '|' && b != ';' && b != ':';
    };
    if (std::all_of(bytes.begin(), bytes.end(), literal)) return std::string(bytes.begin(), bytes.end());
    std::string out = "|";
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        if (i) out.push_back(' ');
        out.push_back(kDigits[bytes[i] >> 4]);
        out.push_back(kDigits[bytes[i] & 0xF]);
    }
    out.push_back('|');
    return out;
}

namespace detail {

class RuleParser {
public:
    explicit RuleParser(std::string_view text) : text_(text) {}

    RuleSet parse() {
        RuleSet set;
        std::set<std::uint32_t> sids;
        while (true) {
            skip_blank_and_comments();
            if (eof()) break;
            auto [line, col] = position();
            Rule rule = parse_rule();
            if (!sids.insert(rule.sid).second)
                throw ParseError(line, col, "duplicate sid " + std::to_string(rule.sid));
            set.rules.push_back(std::move(rule));
        }
        return set;
    }

private:
    struct Pos {
        std::size_t line;
        std::size_t col;
    };

    bool eof() const { return i_ >= text_.size(); }
    char peek() const { return eof() ? '\0' : text_[i_]; }

    Pos position() const { return position_of(i_); }
    Pos position_of(std::size_t index) const {
        std::size_t line = 1, col = 1;
        for (std::size_t k = 0; k < index && k < text_.size(); ++k) {
            if (text_[k] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        return {line, col};
    }

    [[noreturn]] void fail_at(std::size_t index, const std::string& reason) const {
        auto p = position_of(index);
        throw ParseError(p.line, p.col, reason);
    }
    [[noreturn]] void fail(const std::string& reason) const { fail_at(i_, reason); }

    static bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

    void skip_space() {
        while (!eof() && is_space(peek())) ++i_;
    }

    void skip_blank_and_comments() {
        while (!eof()) {
            if (is_space(peek())) {
                ++i_;
            } else if (peek() == '#') {
                while (!eof() && peek() != '\n') ++i_;
            } else {
                break;
            }
        }
    }

    std::string_view word() {
        skip_space();
        std::size_t start = i_;
        while (!eof() && !is_space(peek()) && peek() != '(' && peek() != ')') ++i_;
        if (start == i_) fail("unexpected " + (eof() ? std::string("end of input") : "'" + std::string(1, peek()) + "'"));
        return text_.substr(start, i_ - start);
    }

    AddrSpec addr() {
        std::size_t start = (skip_space(), i_);
        std::string_view w = word();
        if (w == "any") return AddrSpec::any();
        if (!w.empty() && w[0] == '$') {
            if (w == "$HONEYNET") return AddrSpec::honeynet();
            if (w == "$EXTERNAL_NET") return AddrSpec::external_net();
            fail_at(start, "unknown variable '" + std::string(w) + "'");
        }
        try {
            return AddrSpec::cidr(Cidr::parse(w));
        } catch (const ConfigError& e) {
            fail_at(start, std::string("bad address: ") + e.what());
        }
    }

    PortSpec port() {
        std::size_t start = (skip_space(), i_);
        std::string_view w = word();
        if (w == "any") return PortSpec{};
        auto n = parse_uint(w);
        if (!n || *n > 65535) fail_at(start, "bad port '" + std::string(w) + "'");
        return PortSpec{static_cast<std::uint16_t>(*n)};
    }

    static std::optional<std::uint64_t> parse_uint(std::string_view w) {
        if (w.empty() || w.size() > 10) return std::nullopt;
        std::uint64_t v = 0;
        for (char c : w) {
            if (c < '0' || c > '9') return std::nullopt;
            v = v * 10 + static_cast<std::uint64_t>(c - '0');
        }
        return v;
    }

    /// Raw text between the quotes, escapes left in place.
    std::string_view quoted() {
        if (peek() != '"') fail("expected '\"'");
        std::size_t start = ++i_;
        while (!eof() && peek() != '"') {
            if (peek() == '\\') ++i_;
            if (!eof()) ++i_;
        }
        if (eof()) fail_at(start - 1, "unterminated quoted string");
        std::string_view inner = text_.substr(start, i_ - start);
        ++i_;
        return inner;
    }

    static std::string unescape_msg(std::string_view s) {
        std::string out;
        for (std::size_t k = 0; k < s.size(); ++k) {
            if (s[k] == '\\' && k + 1 < s.size()) ++k;
            out.push_back(s[k]);
        }
        return out;
    }

    Bytes pattern_value(std::size_t value_start) {
        std::string_view raw = quoted();
        try {
            return parse_pattern(raw);
        } catch (const PatternError& e) {
            fail_at(value_start + 1 + e.offset(), e.what());
        }
    }

    std::uint32_t positive_value(std::string_view key) {
        std::size_t start = i_;
        while (!eof() && peek() != ';' && peek() != ')' && !is_space(peek())) ++i_;
        auto n = parse_uint(text_.substr(start, i_ - start));
        if (!n || *n == 0 || *n > 0xFFFFFFFFULL) fail_at(start, std::string(key) + " must be a positive integer");
        return static_cast<std::uint32_t>(*n);
    }

    Rule parse_rule() {
        Rule rule;
        std::size_t rule_start = i_;

        std::size_t at = i_;
        std::string_view action = word();
        if (action != "alert") fail_at(at, "unknown action '" + std::string(action) + "'");
        rule.action = RuleAction::Alert;

        skip_space();
        at = i_;
        std::string_view proto = word();
        if (proto == "ip") rule.protocol = RuleProtocol::Ip;
        else if (proto == "tcp") rule.protocol = RuleProtocol::Tcp;
        else if (proto == "udp") rule.protocol = RuleProtocol::Udp;
        else fail_at(at, "unknown protocol '" + std::string(proto) + "'");

        rule.src_addr = addr();
        rule.src_port = port();
        skip_space();
        at = i_;
        if (word() != "->") fail_at(at, "expected '->'");
        rule.dst_addr = addr();
        rule.dst_port = port();

        skip_space();
        if (peek() != '(') fail("expected '('");
        ++i_;

        std::set<std::string, std::less<>> seen;
        std::optional<std::size_t> replace_at;
        bool have_sid = false, have_content = false;
        while (true) {
            skip_space();
            if (peek() == ')') {
                ++i_;
                break;
            }
            if (eof()) fail("unterminated option list");
            std::size_t key_start = i_;
            while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) ++i_;
            std::string_view key = text_.substr(key_start, i_ - key_start);
            if (key.empty()) fail("expected option keyword");
            if (key != "msg" && key != "content" && key != "replace" && key != "sid" && key != "rev")
                fail_at(key_start, "unknown option '" + std::string(key) + "'");
            if (!seen.insert(std::string(key)).second) fail_at(key_start, "duplicate option '" + std::string(key) + "'");
            skip_space();
            if (peek() != ':') fail("expected ':' after '" + std::string(key) + "'");
            ++i_;
            skip_space();
            std::size_t value_start = i_;
            if (key == "msg") {
                rule.msg = unescape_msg(quoted());
            } else if (key == "content") {
                rule.content = pattern_value(value_start);
                if (rule.content.empty()) fail_at(value_start, "empty content");
                have_content = true;
            } else if (key == "replace") {
                rule.replace = pattern_value(value_start);
                replace_at = value_start;
            } else if (key == "sid") {
                rule.sid = positive_value(key);
                have_sid = true;
            } else {
                rule.rev = positive_value(key);
            }
            skip_space();
            if (eof()) fail("unterminated option list");
            if (peek() == ';') {
                ++i_;
            } else if (peek() != ')') {
                fail("expected ';' or ')'");
            }
        }

        // Nothing but a comment may follow on the closing line.
        while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++i_;
        if (!eof() && peek() != '\n' && peek() != '#') fail("trailing characters after rule");

        if (replace_at && !have_content) fail_at(*replace_at, "replace without content");
        if (!have_content) fail_at(rule_start, "missing content");
        if (!have_sid) fail_at(rule_start, "missing sid");
        if (rule.replace && rule.replace->size() != rule.content.size())
            fail_at(*replace_at, "replace length mismatch (" + std::to_string(rule.replace->size()) + " vs " +
                                     std::to_string(rule.content.size()) + " content bytes)");
        return rule;
    }

    std::string_view text_;
    std::size_t i_ = 0;
};

}  // namespace detail

/// Parses rule-file text. A rule may span several lines; it ends at the
/// closing parenthesis of its option list.
inline RuleSet parse_ruleset(std::string_view text) { return detail::RuleParser(text).parse(); }

inline std::string render(const AddrSpec& a) {
    switch (a.kind) {
        case AddrSpec::Kind::Honeynet: return "$HONEYNET";
        case AddrSpec::Kind::ExternalNet: return "$EXTERNAL_NET";
        case AddrSpec::Kind::Any: return "any";
        case AddrSpec::Kind::Block: return a.block.prefix == 32 ? a.block.base.str() : a.block.str();
    }
    return "any";
}

inline std::string render(const PortSpec& p) { return p.port ? std::to_string(*p.port) : "any"; }

/// One-line canonical form; parse_ruleset(render(r)) == {r}.
inline std::string render(const Rule& r) {
    std::string proto = r.protocol == RuleProtocol::Ip ? "ip" : r.protocol == RuleProtocol::Tcp ? "tcp" : "udp";
    std::string msg;
    for (char c : r.msg) {
        if (c == '"' || c == '\\') msg.push_back('\\');
        msg.push_back(c);
    }
    std::string out = "alert " + proto + " " + render(r.src_addr) + " " + render(r.src_port) + " -> " +
                      render(r.dst_addr) + " " + render(r.dst_port) + " (msg:\"" + msg +
                      "\"; rev:" + std::to_string(r.rev) + "; sid:" + std::to_string(r.sid) + "; content:\"" +
                      render_pattern(r.content) + "\";";
    if (r.replace) out += " replace:\"" + render_pattern(*r.replace) + "\";";
    out += ")";
    return out;
}

inline std::string render(const RuleSet& set) {
    std::string out;
    for (const auto& r : set.rules) out += render(r) + "\n";
    return out;
}

struct MatchSpan {
    std::size_t offset = 0;
    std::size_t length = 0;
    bool operator==(const MatchSpan&) const = default;
};

inline bool header_matches(const Rule& r, const Packet& p, const NetConfig& cfg) {
    if (r.protocol == RuleProtocol::Tcp && p.protocol != Protocol::Tcp) return false;
    if (r.protocol == RuleProtocol::Udp && p.protocol != Protocol::Udp) return false;
    return r.src_addr.matches(p.src_ip, cfg) && r.dst_addr.matches(p.dst_ip, cfg) && r.src_port.matches(p.src_port) &&
           r.dst_port.matches(p.dst_port);
}

inline std::optional<std::size_t> find_pattern(std::span<const std::uint8_t> haystack, std::span<const std::uint8_t> needle,
                                               std::size_t from = 0) {
    if (needle.empty() || from > haystack.size() || haystack.size() - from < needle.size()) return std::nullopt;
    auto it = std::search(haystack.begin() + static_cast<std::ptrdiff_t>(from), haystack.end(),
                          std::boyer_moore_horspool_searcher(needle.begin(), needle.end()));
    if (it == haystack.end()) return std::nullopt;
    return static_cast<std::size_t>(it - haystack.begin());
}

/// Lowest payload offset where the rule's content occurs, if the header matches.
inline std::optional<MatchSpan> match_rule(const Rule& r, const Packet& p, const NetConfig& cfg) {
    if (!header_matches(r, p, cfg)) return std::nullopt;
    auto off = find_pattern(p.payload, r.content);
    if (!off) return std::nullopt;
    return MatchSpan{*off, r.content.size()};
}

struct RewriteResult {
    Packet packet;
    std::vector<std::size_t> offsets;
};

/// Overwrites every non-overlapping occurrence of the content, scanning left
/// to right, and refreshes checksums. Rules without replace leave the payload
/// untouched.
inline RewriteResult rewrite(const Rule& r, Packet p) {
    RewriteResult result;
    if (r.replace && !r.content.empty()) {
        std::size_t from = 0;
        while (auto off = find_pattern(p.payload, r.content, from)) {
            std::copy(r.replace->begin(), r.replace->end(), p.payload.begin() + static_cast<std::ptrdiff_t>(*off));
            result.offsets.push_back(*off);
            from = *off + r.content.size();
        }
    }
    result.packet = recompute_checksums(std::move(p));
    return result;
}

inline Packet apply_replace(const Rule& r, Packet p) { return rewrite(r, std::move(p)).packet; }

}  // namespace honeynet
