#pragma once

/// @file netmodel.hpp
/// @brief Packet model, addressing, flow identity, direction classification
/// and checksum arithmetic shared by every other part of the library.
///
/// Checksum layout (fixed, so that rewritten packets can be re-validated):
///
///   ip_checksum   RFC 1071 sum over a 20-byte IPv4 header serialization
///                 45 00 | total_len | 00 00 | 00 00 | ttl proto | 00 00 |
///                 src(4) | dst(4)
///                 where total_len = 20 + l4 header length + payload length
///                 (l4 header length: TCP 20, UDP 8, ICMP 8, OTHER-IP 0).
///
///   l4_checksum   RFC 1071 sum over the pseudo-header
///                 src(4) | dst(4) | 00 proto | payload_len(2) |
///                 src_port(2) | dst_port(2) | 00 tcp_flags
///                 followed by the payload (odd tail padded with a zero byte).
///
/// Protocol numbers: TCP 6, UDP 17, ICMP 1, OTHER-IP 0.

#include <algorithm>
#include <array>
#include <chrono>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "honeynet/hex.hpp"

namespace honeynet {

/// Virtual time, microseconds since scenario start.
using SimTime = std::chrono::microseconds;

inline constexpr SimTime kOneSecond = std::chrono::seconds(1);
inline constexpr SimTime kOneDay = std::chrono::hours(24);

inline constexpr std::size_t kMaxPayload = 65495;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Ipv4 {
    std::uint32_t value = 0;

    constexpr Ipv4() = default;
    constexpr explicit Ipv4(std::uint32_t v) : value(v) {}
    constexpr Ipv4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
        : value((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d) {}

    /// Parses dotted-quad notation; throws ConfigError on anything else.
    static Ipv4 parse(std::string_view text) {
        std::uint32_t result = 0;
        int octets = 0;
        std::size_t i = 0;
        while (octets < 4) {
            if (i >= text.size() || text[i] < '0' || text[i] > '9')
                throw ConfigError("malformed IPv4 address '" + std::string(text) + "'");
            std::uint32_t octet = 0;
            std::size_t digits = 0;
            while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
                octet = octet * 10 + static_cast<std::uint32_t>(text[i] - '0');
                ++i;
                if (++digits > 3 || octet > 255)
                    throw ConfigError("malformed IPv4 address '" + std::string(text) + "'");
            }
            result = (result << 8) | octet;
            ++octets;
            if (octets < 4) {
                if (i >= text.size() || text[i] != '.')
                    throw ConfigError("malformed IPv4 address '" + std::string(text) + "'");
                ++i;
            }
        }
        if (i != text.size()) throw ConfigError("malformed IPv4 address '" + std::string(text) + "'");
        return Ipv4(result);
    }

    std::string str() const {
        return std::to_string(value >> 24) + "." + std::to_string((value >> 16) & 0xFF) + "." +
               std::to_string((value >> 8) & 0xFF) + "." + std::to_string(value & 0xFF);
    }

    friend constexpr auto operator<=>(const Ipv4&, const Ipv4&) = default;
};

/// 48-bit hardware address held in the low bits of a 64-bit word.
struct MacAddr {
    std::uint64_t value = 0;

    static constexpr std::uint64_t kMask = 0xFFFF'FFFF'FFFFULL;

    constexpr MacAddr() = default;
    constexpr explicit MacAddr(std::uint64_t v) : value(v & kMask) {}

    /// Locally administered address derived from an IPv4 address.
    static constexpr MacAddr for_host(Ipv4 ip) { return MacAddr(0x0200'0000'0000ULL | ip.value); }

    static MacAddr parse(std::string_view text) {
        if (text.size() != 17) throw ConfigError("malformed MAC address '" + std::string(text) + "'");
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < 17; ++i) {
            if (i % 3 == 2) {
                if (text[i] != ':') throw ConfigError("malformed MAC address '" + std::string(text) + "'");
                continue;
            }
            int d = hex_value(text[i]);
            if (d < 0) throw ConfigError("malformed MAC address '" + std::string(text) + "'");
            v = (v << 4) | static_cast<std::uint64_t>(d);
        }
        return MacAddr(v);
    }

    std::string str() const {
        static constexpr char kDigits[] = "0123456789abcdef";
        std::string out;
        for (int byte = 5; byte >= 0; --byte) {
            auto b = static_cast<unsigned>((value >> (byte * 8)) & 0xFF);
            out.push_back(kDigits[b >> 4]);
            out.push_back(kDigits[b & 0xF]);
            if (byte) out.push_back(':');
        }
        return out;
    }

    friend constexpr auto operator<=>(const MacAddr&, const MacAddr&) = default;
};

struct Cidr {
    Ipv4 base;
    std::uint8_t prefix = 32;

    constexpr std::uint32_t mask() const {
        return prefix == 0 ? 0u : ~std::uint32_t{0} << (32 - prefix);
    }
    constexpr bool contains(Ipv4 ip) const { return (ip.value & mask()) == (base.value & mask()); }
    constexpr std::uint64_t size() const { return std::uint64_t{1} << (32 - prefix); }
    constexpr Ipv4 network() const { return Ipv4(base.value & mask()); }
    /// The i-th address of the block, counting from the network address.
    constexpr Ipv4 at(std::uint64_t i) const { return Ipv4(network().value + static_cast<std::uint32_t>(i)); }

    static Cidr parse(std::string_view text) {
        auto slash = text.find('/');
        if (slash == std::string_view::npos) return Cidr{Ipv4::parse(text), 32};
        std::string_view len = text.substr(slash + 1);
        if (len.empty() || len.size() > 2 || !std::all_of(len.begin(), len.end(), [](char c) { return c >= '0' && c <= '9'; }))
            throw ConfigError("malformed CIDR prefix in '" + std::string(text) + "'");
        int bits = std::stoi(std::string(len));
        if (bits > 32) throw ConfigError("CIDR prefix length out of range in '" + std::string(text) + "'");
        return Cidr{Ipv4::parse(text.substr(0, slash)), static_cast<std::uint8_t>(bits)};
    }

    std::string str() const { return network().str() + "/" + std::to_string(prefix); }

    friend constexpr bool operator==(const Cidr& a, const Cidr& b) {
        return a.prefix == b.prefix && a.network() == b.network();
    }
};

enum class Protocol : std::uint8_t { Tcp, Udp, Icmp, OtherIp };

constexpr std::uint8_t protocol_number(Protocol p) {
    switch (p) {
        case Protocol::Tcp: return 6;
        case Protocol::Udp: return 17;
        case Protocol::Icmp: return 1;
        case Protocol::OtherIp: return 0;
    }
    return 0;
}

constexpr std::size_t l4_header_length(Protocol p) {
    switch (p) {
        case Protocol::Tcp: return 20;
        case Protocol::Udp:
        case Protocol::Icmp: return 8;
        case Protocol::OtherIp: return 0;
    }
    return 0;
}

constexpr std::string_view to_string(Protocol p) {
    switch (p) {
        case Protocol::Tcp: return "TCP";
        case Protocol::Udp: return "UDP";
        case Protocol::Icmp: return "ICMP";
        case Protocol::OtherIp: return "OTHER-IP";
    }
    return "OTHER-IP";
}

inline Protocol parse_protocol(std::string_view s) {
    if (s == "TCP") return Protocol::Tcp;
    if (s == "UDP") return Protocol::Udp;
    if (s == "ICMP") return Protocol::Icmp;
    if (s == "OTHER-IP") return Protocol::OtherIp;
    throw ConfigError("unknown protocol '" + std::string(s) + "'");
}

/// TCP flag bits, using their on-the-wire bit positions.
struct TcpFlags {
    std::uint8_t bits = 0;

    static constexpr std::uint8_t kFin = 0x01;
    static constexpr std::uint8_t kSyn = 0x02;
    static constexpr std::uint8_t kRst = 0x04;
    static constexpr std::uint8_t kPsh = 0x08;
    static constexpr std::uint8_t kAck = 0x10;
    static constexpr std::uint8_t kAll = kFin | kSyn | kRst | kPsh | kAck;

    constexpr bool has(std::uint8_t flag) const { return (bits & flag) == flag; }
    constexpr bool empty() const { return bits == 0; }

    friend constexpr auto operator<=>(const TcpFlags&, const TcpFlags&) = default;
};

inline constexpr TcpFlags kSyn{TcpFlags::kSyn};
inline constexpr TcpFlags kSynAck{TcpFlags::kSyn | TcpFlags::kAck};
inline constexpr TcpFlags kAck{TcpFlags::kAck};
inline constexpr TcpFlags kPshAck{TcpFlags::kPsh | TcpFlags::kAck};
inline constexpr TcpFlags kRstAck{TcpFlags::kRst | TcpFlags::kAck};

struct Packet {
    MacAddr src_mac;
    MacAddr dst_mac;
    Ipv4 src_ip;
    Ipv4 dst_ip;
    Protocol protocol = Protocol::Tcp;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;
    TcpFlags tcp_flags;
    std::uint16_t ip_checksum = 0;
    std::uint16_t l4_checksum = 0;
    Bytes payload;
    std::uint8_t ttl = 64;
    SimTime timestamp{0};

    bool operator==(const Packet&) const = default;
};

/// Throws ConfigError if the packet violates the model's structural limits.
inline void validate_packet(const Packet& p) {
    if (p.payload.size() > kMaxPayload)
        throw ConfigError("payload of " + std::to_string(p.payload.size()) + " bytes exceeds " +
                          std::to_string(kMaxPayload));
    if (p.protocol != Protocol::Tcp && !p.tcp_flags.empty())
        throw ConfigError("tcp_flags set on a non-TCP packet");
    if ((p.tcp_flags.bits & ~TcpFlags::kAll) != 0) throw ConfigError("unknown TCP flag bits");
    if (p.timestamp.count() < 0) throw ConfigError("negative timestamp");
}

struct FlowKey {
    Ipv4 src_ip;
    Ipv4 dst_ip;
    Protocol protocol = Protocol::Tcp;
    std::uint16_t src_port = 0;
    std::uint16_t dst_port = 0;

    friend constexpr auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

inline FlowKey flow_key(const Packet& p) {
    return FlowKey{p.src_ip, p.dst_ip, p.protocol, p.src_port, p.dst_port};
}

enum class Direction : std::uint8_t { Inbound, Outbound, Internal, CaptureChannel, ExternalTransit };

constexpr std::string_view to_string(Direction d) {
    switch (d) {
        case Direction::Inbound: return "INBOUND";
        case Direction::Outbound: return "OUTBOUND";
        case Direction::Internal: return "INTERNAL";
        case Direction::CaptureChannel: return "CAPTURE_CHANNEL";
        case Direction::ExternalTransit: return "EXTERNAL_TRANSIT";
    }
    return "EXTERNAL_TRANSIT";
}

inline Direction parse_direction(std::string_view s) {
    if (s == "INBOUND") return Direction::Inbound;
    if (s == "OUTBOUND") return Direction::Outbound;
    if (s == "INTERNAL") return Direction::Internal;
    if (s == "CAPTURE_CHANNEL") return Direction::CaptureChannel;
    if (s == "EXTERNAL_TRANSIT") return Direction::ExternalTransit;
    throw ConfigError("unknown direction '" + std::string(s) + "'");
}

inline constexpr std::uint16_t kDefaultCapturePort = 1101;

struct NetConfig {
    Cidr honeynet_subnet{Ipv4(10, 1, 0, 0), 26};
    Ipv4 collector_ip{192, 0, 2, 1};
    std::uint16_t capture_port = kDefaultCapturePort;
    std::set<Ipv4> honeypot_ips;

    bool in_honeynet(Ipv4 ip) const { return honeynet_subnet.contains(ip); }

    void validate() const {
        if (in_honeynet(collector_ip))
            throw ConfigError("collector " + collector_ip.str() + " lies inside the honeynet subnet");
        for (Ipv4 ip : honeypot_ips)
            if (!in_honeynet(ip))
                throw ConfigError("honeypot " + ip.str() + " lies outside " + honeynet_subnet.str());
    }

    bool operator==(const NetConfig&) const = default;
};

/// The reference deployment: a /26 (64 addresses) with two honeypots.
inline NetConfig reference_config() {
    NetConfig cfg;
    cfg.honeypot_ips = {Ipv4(10, 1, 0, 5), Ipv4(10, 1, 0, 6)};
    return cfg;
}

inline Direction classify_direction(const Packet& p, const NetConfig& cfg) {
    if (p.protocol == Protocol::Udp && p.dst_ip == cfg.collector_ip && p.dst_port == cfg.capture_port)
        return Direction::CaptureChannel;
    bool src_in = cfg.in_honeynet(p.src_ip);
    bool dst_in = cfg.in_honeynet(p.dst_ip);
    if (src_in && dst_in) return Direction::Internal;
    if (src_in) return Direction::Outbound;
    if (dst_in) return Direction::Inbound;
    return Direction::ExternalTransit;
}

// --- checksums -------------------------------------------------------------

/// RFC 1071 one's-complement sum, accumulated over big-endian 16-bit words.
class ChecksumAccumulator {
public:
    void add(std::span<const std::uint8_t> bytes) {
        for (std::uint8_t b : bytes) add_byte(b);
    }
    void add_u8(std::uint8_t b) { add_byte(b); }
    void add_u16(std::uint16_t v) {
        add_byte(static_cast<std::uint8_t>(v >> 8));
        add_byte(static_cast<std::uint8_t>(v));
    }
    void add_u32(std::uint32_t v) {
        add_u16(static_cast<std::uint16_t>(v >> 16));
        add_u16(static_cast<std::uint16_t>(v));
    }

    std::uint16_t finish() const {
        std::uint64_t sum = sum_;
        if (odd_) sum += std::uint64_t{pending_} << 8;
        while (sum >> 16) sum = (sum & 0xFFFF) + (sum >> 16);
        return static_cast<std::uint16_t>(~sum & 0xFFFF);
    }

private:
    void add_byte(std::uint8_t b) {
        if (odd_) {
            sum_ += (std::uint64_t{pending_} << 8) | b;
            odd_ = false;
        } else {
            pending_ = b;
            odd_ = true;
        }
    }

    std::uint64_t sum_ = 0;
    std::uint8_t pending_ = 0;
    bool odd_ = false;
};

inline std::uint16_t internet_checksum(std::span<const std::uint8_t> bytes) {
    ChecksumAccumulator acc;
    acc.add(bytes);
    return acc.finish();
}

/// IPv4 total length implied by the simplified frame.
inline std::size_t ip_total_length(const Packet& p) {
    return 20 + l4_header_length(p.protocol) + p.payload.size();
}

/// The fixed 20-byte header serialization covered by ip_checksum, with the
/// checksum field zeroed.
inline std::array<std::uint8_t, 20> ip_header_bytes(const Packet& p) {
    auto total = static_cast<std::uint16_t>(ip_total_length(p));
    return {0x45, 0x00, static_cast<std::uint8_t>(total >> 8), static_cast<std::uint8_t>(total),
            0x00, 0x00, 0x00, 0x00, p.ttl, protocol_number(p.protocol), 0x00, 0x00,
            static_cast<std::uint8_t>(p.src_ip.value >> 24), static_cast<std::uint8_t>(p.src_ip.value >> 16),
            static_cast<std::uint8_t>(p.src_ip.value >> 8), static_cast<std::uint8_t>(p.src_ip.value),
            static_cast<std::uint8_t>(p.dst_ip.value >> 24), static_cast<std::uint8_t>(p.dst_ip.value >> 16),
            static_cast<std::uint8_t>(p.dst_ip.value >> 8), static_cast<std::uint8_t>(p.dst_ip.value)};
}

inline std::uint16_t compute_ip_checksum(const Packet& p) { return internet_checksum(ip_header_bytes(p)); }

inline std::uint16_t compute_l4_checksum(const Packet& p) {
    ChecksumAccumulator acc;
    acc.add_u32(p.src_ip.value);
    acc.add_u32(p.dst_ip.value);
    acc.add_u8(0);
    acc.add_u8(protocol_number(p.protocol));
    acc.add_u16(static_cast<std::uint16_t>(p.payload.size()));
    acc.add_u16(p.src_port);
    acc.add_u16(p.dst_port);
    acc.add_u8(0);
    acc.add_u8(p.tcp_flags.bits);
    acc.add(p.payload);
    return acc.finish();
}

inline Packet recompute_checksums(Packet p) {
    p.ip_checksum = compute_ip_checksum(p);
    p.l4_checksum = compute_l4_checksum(p);
    return p;
}

inline bool verify_checksums(const Packet& p) {
    return p.ip_checksum == compute_ip_checksum(p) && p.l4_checksum == compute_l4_checksum(p);
}

}  // namespace honeynet
