#pragma once

/// @file honeywall.hpp
/// @brief The inline gateway: tap, classify, divert the capture channel,
/// enforce outbound connection quotas, rewrite matching payloads, forward.
///
/// Pipeline order for every packet handed to process():
///   1. tap        the packet is recorded unconditionally
///   2. classify   classify_direction under the NetConfig
///      (a packet failing verify_checksums raises ALERT "bad-checksum" and
///       continues through the pipeline unchanged)
///   3. capture    CAPTURE_CHANNEL packets are diverted to the collector;
///                 they are never forwarded and never charged to a quota
///   4. quota      an OUTBOUND connection initiation (TCP SYN without ACK on
///                 an unseen flow, or the first packet of an unseen non-TCP
///                 flow) is checked against the rolling-window quota; a
///                 denied initiation is dropped silently
///   5. rules      every rule is matched against the packet as received; the
///                 first matching rule with a replace rewrites the payload
///                 (REWRITTEN), every other match raises ALERT "signature"
///   6. forward    the (possibly rewritten) packet leaves otherwise untouched

#include <algorithm>
#include <concepts>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "honeynet/netmodel.hpp"
#include "honeynet/rulelang.hpp"
#include "honeynet/trace.hpp"

namespace honeynet {

struct QuotaPolicy {
    /// Maximum initiations per rolling window; a protocol without an entry is unlimited.
    std::map<Protocol, std::uint32_t> limits{{Protocol::Tcp, 15}, {Protocol::Udp, 20}};
    SimTime window = kOneDay;

    std::optional<std::uint32_t> limit(Protocol p) const {
        auto it = limits.find(p);
        if (it == limits.end()) return std::nullopt;
        return it->second;
    }

    void validate() const {
        for (const auto& [proto, n] : limits)
            if (n == 0) throw ConfigError("quota limit for " + std::string(to_string(proto)) + " must be positive");
        if (window.count() <= 0) throw ConfigError("quota window must be positive");
    }

    bool operator==(const QuotaPolicy&) const = default;
};

struct QuotaKey {
    Ipv4 honeypot;
    Protocol protocol = Protocol::Tcp;
    friend constexpr auto operator<=>(const QuotaKey&, const QuotaKey&) = default;
};

struct GatewayState {
    std::map<QuotaKey, std::vector<SimTime>> quota_ledger;
    std::map<FlowKey, SimTime> seen_flows;
    SimTime clock{0};
    std::uint64_t next_seq = 0;  // tap sequence number of the next packet

    std::size_t ledger_entries() const {
        std::size_t n = 0;
        for (const auto& [key, times] : quota_ledger) n += times.size();
        return n;
    }

    bool operator==(const GatewayState&) const = default;
};

inline GatewayState reset_state(const NetConfig& cfg, const QuotaPolicy& policy) {
    cfg.validate();
    policy.validate();
    return GatewayState{};
}

/// Allows the initiation iff fewer than `limit` ledger entries for the key lie
/// in (t - window, t]; an allowed initiation is appended to the ledger.
inline bool quota_check(const QuotaKey& key, SimTime t, GatewayState& st, const QuotaPolicy& policy) {
    auto limit = policy.limit(key.protocol);
    if (!limit) return true;
    auto& times = st.quota_ledger[key];
    if (!times.empty() && t < times.back()) throw std::invalid_argument("quota_check: time precedes ledger entries");
    auto first_in_window = std::upper_bound(times.begin(), times.end(), t - policy.window);
    auto in_window = static_cast<std::size_t>(times.end() - first_in_window);
    if (in_window >= *limit) return false;
    times.push_back(t);
    return true;
}

// --- events ----------------------------------------------------------------

enum class EventKind : std::uint8_t { Forwarded, Rewritten, QuotaDropped, DivertedCapture, Alert };

constexpr std::string_view to_string(EventKind k) {
    switch (k) {
        case EventKind::Forwarded: return "FORWARDED";
        case EventKind::Rewritten: return "REWRITTEN";
        case EventKind::QuotaDropped: return "QUOTA_DROPPED";
        case EventKind::DivertedCapture: return "DIVERTED_CAPTURE";
        case EventKind::Alert: return "ALERT";
    }
    return "ALERT";
}

namespace event {
struct Forwarded {
    bool operator==(const Forwarded&) const = default;
};
struct Rewritten {
    std::uint32_t sid = 0;
    std::vector<std::size_t> offsets;
    bool operator==(const Rewritten&) const = default;
};
struct QuotaDropped {
    Ipv4 honeypot_ip;
    Protocol protocol = Protocol::Tcp;
    bool operator==(const QuotaDropped&) const = default;
};
struct DivertedCapture {
    bool operator==(const DivertedCapture&) const = default;
};
struct Alert {
    std::string reason;
    std::optional<std::uint32_t> sid;
    bool operator==(const Alert&) const = default;
};
}  // namespace event

using EventDetail = std::variant<event::Forwarded, event::Rewritten, event::QuotaDropped, event::DivertedCapture, event::Alert>;

inline constexpr std::string_view kReasonBadChecksum = "bad-checksum";
inline constexpr std::string_view kReasonSignature = "signature";
inline constexpr std::string_view kReasonUndecodableCapture = "undecodable-capture";

struct GatewayEvent {
    SimTime time{0};
    std::uint64_t seq = 0;  // tap sequence number of the packet that caused it
    EventDetail detail;
    FlowKey flow;
    Direction direction = Direction::Inbound;
    std::size_t byte_count = 0;

    EventKind kind() const { return static_cast<EventKind>(detail.index()); }

    /// The signature id carried by REWRITTEN and signature ALERT events.
    std::optional<std::uint32_t> sid() const {
        if (auto* r = std::get_if<event::Rewritten>(&detail)) return r->sid;
        if (auto* a = std::get_if<event::Alert>(&detail)) return a->sid;
        return std::nullopt;
    }

    bool operator==(const GatewayEvent&) const = default;
};

inline Json flow_to_json(const FlowKey& k) {
    return Json{{"src_ip", k.src_ip.str()},
                {"dst_ip", k.dst_ip.str()},
                {"protocol", to_string(k.protocol)},
                {"src_port", k.src_port},
                {"dst_port", k.dst_port}};
}

inline FlowKey flow_from_json(const Json& j) {
    return FlowKey{Ipv4::parse(j.at("src_ip").get<std::string>()), Ipv4::parse(j.at("dst_ip").get<std::string>()),
                   parse_protocol(j.at("protocol").get<std::string>()), j.at("src_port").get<std::uint16_t>(),
                   j.at("dst_port").get<std::uint16_t>()};
}

inline Json event_to_json(const GatewayEvent& e) {
    Json j{{"seq", e.seq}, {"time", e.time.count()}, {"kind", to_string(e.kind())}};
    std::visit(
        [&](const auto& d) {
            using T = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<T, event::Rewritten>) {
                j["sid"] = d.sid;
                j["offsets"] = d.offsets;
            } else if constexpr (std::is_same_v<T, event::QuotaDropped>) {
                j["honeypot_ip"] = d.honeypot_ip.str();
                j["protocol"] = to_string(d.protocol);
            } else if constexpr (std::is_same_v<T, event::Alert>) {
                j["reason"] = d.reason;
                if (d.sid) j["sid"] = *d.sid;
            }
        },
        e.detail);
    j["flow"] = flow_to_json(e.flow);
    j["direction"] = to_string(e.direction);
    j["byte_count"] = e.byte_count;
    return j;
}

inline GatewayEvent event_from_json(const Json& j) {
    GatewayEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.time = SimTime(j.at("time").get<std::int64_t>());
    const auto& kind = j.at("kind").get_ref<const std::string&>();
    if (kind == "FORWARDED") {
        e.detail = event::Forwarded{};
    } else if (kind == "REWRITTEN") {
        e.detail = event::Rewritten{j.at("sid").get<std::uint32_t>(), j.at("offsets").get<std::vector<std::size_t>>()};
    } else if (kind == "QUOTA_DROPPED") {
        e.detail = event::QuotaDropped{Ipv4::parse(j.at("honeypot_ip").get<std::string>()),
                                       parse_protocol(j.at("protocol").get<std::string>())};
    } else if (kind == "DIVERTED_CAPTURE") {
        e.detail = event::DivertedCapture{};
    } else if (kind == "ALERT") {
        event::Alert a{j.at("reason").get<std::string>(), std::nullopt};
        if (j.contains("sid")) a.sid = j.at("sid").get<std::uint32_t>();
        e.detail = std::move(a);
    } else {
        throw ConfigError("unknown event kind '" + kind + "'");
    }
    e.flow = flow_from_json(j.at("flow"));
    e.direction = parse_direction(j.at("direction").get<std::string>());
    e.byte_count = j.at("byte_count").get<std::size_t>();
    return e;
}

// --- processing ------------------------------------------------------------

enum class Verdict : std::uint8_t { Forward, Drop, DivertToCollector };

struct Decision {
    Verdict verdict = Verdict::Forward;
    Packet packet;       // the packet to forward or divert; the input for drops
    std::string reason;  // set for drops
};

struct ProcessResult {
    Decision decision;
    std::vector<GatewayEvent> events;
};

/// Anything that can record tapped packets.
template <typename T>
concept PacketTap = requires(T& tap, const Packet& p) { tap.record(p); };

struct VectorTap {
    std::vector<Packet> packets;
    void record(const Packet& p) { packets.push_back(p); }
};

inline bool is_connection_initiation(const Packet& p, Direction dir, const GatewayState& st) {
    if (dir != Direction::Outbound) return false;
    if (st.seen_flows.contains(flow_key(p))) return false;
    if (p.protocol == Protocol::Tcp) return p.tcp_flags.has(TcpFlags::kSyn) && !p.tcp_flags.has(TcpFlags::kAck);
    return true;
}

/// Runs one packet through the gateway. `st` is advanced in place; packets
/// must arrive in non-decreasing timestamp order.
template <PacketTap Tap>
ProcessResult process(const Packet& p, GatewayState& st, const RuleSet& rules, const NetConfig& cfg,
                      const QuotaPolicy& policy, Tap& tap) {
    if (p.timestamp < st.clock) throw std::invalid_argument("packet timestamp precedes gateway clock");
    st.clock = p.timestamp;
    const std::uint64_t seq = st.next_seq++;
    tap.record(p);

    const Direction dir = classify_direction(p, cfg);
    const FlowKey flow = flow_key(p);
    ProcessResult out;
    auto emit = [&](EventDetail detail, std::size_t bytes) {
        out.events.push_back(GatewayEvent{p.timestamp, seq, std::move(detail), flow, dir, bytes});
    };

    if (!verify_checksums(p)) emit(event::Alert{std::string(kReasonBadChecksum), std::nullopt}, p.payload.size());

    if (dir == Direction::CaptureChannel) {
        st.seen_flows.try_emplace(flow, p.timestamp);
        emit(event::DivertedCapture{}, p.payload.size());
        out.decision = Decision{Verdict::DivertToCollector, p, {}};
        return out;
    }

    if (is_connection_initiation(p, dir, st) && !quota_check(QuotaKey{p.src_ip, p.protocol}, p.timestamp, st, policy)) {
        emit(event::QuotaDropped{p.src_ip, p.protocol}, p.payload.size());
        out.decision = Decision{Verdict::Drop, p, "quota"};
        return out;
    }
    st.seen_flows.try_emplace(flow, p.timestamp);

    Packet forwarded = p;
    bool rewritten = false;
    for (const Rule& rule : rules.rules) {
        if (!match_rule(rule, p, cfg)) continue;
        if (rule.replace && !rewritten) {
            auto result = rewrite(rule, p);
            forwarded = std::move(result.packet);
            rewritten = true;
            emit(event::Rewritten{rule.sid, std::move(result.offsets)}, p.payload.size());
        } else {
            emit(event::Alert{std::string(kReasonSignature), rule.sid}, p.payload.size());
        }
    }

    emit(event::Forwarded{}, forwarded.payload.size());
    out.decision = Decision{Verdict::Forward, std::move(forwarded), {}};
    return out;
}

}  // namespace honeynet
