#pragma once

/// @file honeytoken.hpp
/// @brief Planted bait data. Each token carries a 16-byte marker that must
/// never appear in traffic unless the token itself was read or sent.

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "honeynet/netmodel.hpp"

namespace honeynet {

inline constexpr std::size_t kMarkerSize = 16;

enum class TokenKind : std::uint8_t { Mail, Spreadsheet, EncryptedFile };

constexpr std::string_view to_string(TokenKind k) {
    switch (k) {
        case TokenKind::Mail: return "MAIL";
        case TokenKind::Spreadsheet: return "SPREADSHEET";
        case TokenKind::EncryptedFile: return "ENCRYPTED_FILE";
    }
    return "MAIL";
}

inline TokenKind parse_token_kind(std::string_view s) {
    if (s == "MAIL") return TokenKind::Mail;
    if (s == "SPREADSHEET") return TokenKind::Spreadsheet;
    if (s == "ENCRYPTED_FILE") return TokenKind::EncryptedFile;
    throw ConfigError("unknown token kind '" + std::string(s) + "'");
}

struct Honeytoken {
    std::string id;
    TokenKind kind = TokenKind::Mail;
    std::array<std::uint8_t, kMarkerSize> marker{};
    std::string planted_path;

    bool operator==(const Honeytoken&) const = default;
};

inline std::array<std::uint8_t, kMarkerSize> parse_marker(std::string_view hex) {
    Bytes b;
    try {
        b = hex_decode(hex);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("token marker: ") + e.what());
    }
    if (b.size() != kMarkerSize) throw ConfigError("token marker must be exactly 16 bytes");
    std::array<std::uint8_t, kMarkerSize> m{};
    std::copy(b.begin(), b.end(), m.begin());
    return m;
}

/// The bytes a reader of the planted file would see: a kind-specific
/// preamble wrapped around the marker.
inline Bytes token_content(const Honeytoken& t) {
    std::string head;
    std::string tail;
    switch (t.kind) {
        case TokenKind::Mail:
            head = "From: finance@example.org\r\nSubject: Zugangsdaten Q2\r\n\r\nRef: ";
            tail = "\r\n";
            break;
        case TokenKind::Spreadsheet:
            head = "Konto;Betrag;Ref\n4711;12500,00;";
            tail = "\n";
            break;
        case TokenKind::EncryptedFile:
            head = "-----BEGIN PGP MESSAGE-----\n\n";
            tail = "\n-----END PGP MESSAGE-----\n";
            break;
    }
    Bytes out = to_bytes(head);
    out.insert(out.end(), t.marker.begin(), t.marker.end());
    out.insert(out.end(), tail.begin(), tail.end());
    return out;
}

/// Throws ConfigError if two tokens share an id or a marker.
inline void check_unique_tokens(const std::vector<Honeytoken>& tokens) {
    std::set<std::string> ids;
    std::set<std::array<std::uint8_t, kMarkerSize>> markers;
    for (const auto& t : tokens) {
        if (t.id.empty()) throw ConfigError("token id must not be empty");
        if (!ids.insert(t.id).second) throw ConfigError("duplicate token id '" + t.id + "'");
        if (!markers.insert(t.marker).second) throw ConfigError("duplicate marker on token '" + t.id + "'");
    }
}

}  // namespace honeynet
