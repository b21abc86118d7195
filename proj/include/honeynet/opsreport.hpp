#pragma once

/// @file opsreport.hpp
/// @brief Operator side: configuration, honeytoken detection, alerting and
/// the traffic report. Everything here reads stores, never live state.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "honeynet/honeytoken.hpp"
#include "honeynet/honeywall.hpp"
#include "honeynet/simnet.hpp"
#include "honeynet/stores.hpp"

namespace honeynet {

// --- configuration -----------------------------------------------------------

enum class AlertType : std::uint8_t { SignatureSeen, TokenSeen, QuotaExceeded, InboundContact };

constexpr std::string_view to_string(AlertType t) {
    switch (t) {
        case AlertType::SignatureSeen: return "SIGNATURE_SEEN";
        case AlertType::TokenSeen: return "TOKEN_SEEN";
        case AlertType::QuotaExceeded: return "QUOTA_EXCEEDED";
        case AlertType::InboundContact: return "INBOUND_CONTACT";
    }
    return "SIGNATURE_SEEN";
}

inline AlertType parse_alert_type(std::string_view s) {
    for (auto t : {AlertType::SignatureSeen, AlertType::TokenSeen, AlertType::QuotaExceeded, AlertType::InboundContact})
        if (to_string(t) == s) return t;
    throw ConfigError("unknown alert type '" + std::string(s) + "'");
}

enum class Severity : std::uint8_t { Low, Medium, High, Critical };

constexpr std::string_view to_string(Severity s) {
    switch (s) {
        case Severity::Low: return "low";
        case Severity::Medium: return "medium";
        case Severity::High: return "high";
        case Severity::Critical: return "critical";
    }
    return "low";
}

inline Severity parse_severity(std::string_view s) {
    for (auto v : {Severity::Low, Severity::Medium, Severity::High, Severity::Critical})
        if (to_string(v) == s) return v;
    throw ConfigError("unknown severity '" + std::string(s) + "'");
}

struct AlertRule {
    AlertType type = AlertType::SignatureSeen;
    std::uint32_t sid = 0;  // SIGNATURE_SEEN
    std::string token;      // TOKEN_SEEN
    Ipv4 host;              // QUOTA_EXCEEDED, INBOUND_CONTACT
    Severity severity = Severity::Medium;

    bool operator==(const AlertRule&) const = default;
};

struct PlantedToken {
    Ipv4 host;
    Honeytoken token;

    bool operator==(const PlantedToken&) const = default;
};

struct Config {
    NetConfig net = reference_config();
    QuotaPolicy quota;
    std::vector<PlantedToken> tokens;
    std::vector<AlertRule> alerts;

    std::vector<Honeytoken> all_tokens() const {
        std::vector<Honeytoken> out;
        for (const auto& p : tokens) out.push_back(p.token);
        return out;
    }

    bool operator==(const Config&) const = default;
};

/// Checks internal consistency. Signature ids are checked separately, since
/// they depend on the rule set in use.
inline void validate_config(const Config& c) {
    c.net.validate();
    c.quota.validate();
    check_unique_tokens(c.all_tokens());
    for (const auto& p : c.tokens)
        if (!c.net.honeypot_ips.contains(p.host))
            throw ConfigError("token '" + p.token.id + "' planted on " + p.host.str() + ", which is not a honeypot");
    for (const auto& a : c.alerts) {
        switch (a.type) {
            case AlertType::SignatureSeen: break;
            case AlertType::TokenSeen: {
                bool known = std::any_of(c.tokens.begin(), c.tokens.end(),
                                         [&](const PlantedToken& p) { return p.token.id == a.token; });
                if (!known) throw ConfigError("alert refers to unknown token '" + a.token + "'");
                break;
            }
            case AlertType::QuotaExceeded:
            case AlertType::InboundContact:
                if (!c.net.honeypot_ips.contains(a.host))
                    throw ConfigError("alert refers to " + a.host.str() + ", which is not a honeypot");
                break;
        }
    }
}

/// Throws ConfigError if a SIGNATURE_SEEN alert names a sid absent from `rules`.
inline void check_alert_sids(const Config& c, const RuleSet& rules) {
    for (const auto& a : c.alerts)
        if (a.type == AlertType::SignatureSeen && !rules.find(a.sid))
            throw ConfigError("alert refers to unknown sid " + std::to_string(a.sid));
}

inline Json config_to_json(const Config& c) {
    Json hp = Json::array();
    for (Ipv4 ip : c.net.honeypot_ips) hp.push_back(ip.str());
    Json limits = Json::object();
    for (const auto& [proto, n] : c.quota.limits) limits[std::string(to_string(proto))] = n;
    Json tokens = Json::array();
    for (const auto& p : c.tokens)
        tokens.push_back(Json{{"id", p.token.id},
                              {"kind", to_string(p.token.kind)},
                              {"marker_hex", hex_encode(p.token.marker)},
                              {"planted_path", p.token.planted_path},
                              {"host", p.host.str()}});
    Json alerts = Json::array();
    for (const auto& a : c.alerts) {
        Json j{{"type", to_string(a.type)}};
        switch (a.type) {
            case AlertType::SignatureSeen: j["sid"] = a.sid; break;
            case AlertType::TokenSeen: j["token"] = a.token; break;
            case AlertType::QuotaExceeded:
            case AlertType::InboundContact: j["host"] = a.host.str(); break;
        }
        j["severity"] = to_string(a.severity);
        alerts.push_back(j);
    }
    return Json{{"network",
                 {{"honeynet_subnet", c.net.honeynet_subnet.str()},
                  {"collector_ip", c.net.collector_ip.str()},
                  {"capture_port", c.net.capture_port},
                  {"honeypot_ips", hp}}},
                {"quota", {{"window_us", c.quota.window.count()}, {"limits", limits}}},
                {"tokens", tokens},
                {"alerts", alerts}};
}

/// Parses and validates a config document. Absent sections take the
/// reference defaults.
inline Config config_from_json(const Json& j) {
    Config c;
    try {
        if (j.contains("network")) {
            const Json& n = j["network"];
            if (n.contains("honeynet_subnet")) c.net.honeynet_subnet = Cidr::parse(n["honeynet_subnet"].get<std::string>());
            if (n.contains("collector_ip")) c.net.collector_ip = Ipv4::parse(n["collector_ip"].get<std::string>());
            if (n.contains("capture_port")) c.net.capture_port = n["capture_port"].get<std::uint16_t>();
            if (n.contains("honeypot_ips")) {
                c.net.honeypot_ips.clear();
                for (const auto& ip : n["honeypot_ips"]) c.net.honeypot_ips.insert(Ipv4::parse(ip.get<std::string>()));
            }
        }
        if (j.contains("quota")) {
            const Json& q = j["quota"];
            if (q.contains("window_us")) c.quota.window = SimTime(q["window_us"].get<std::int64_t>());
            if (q.contains("limits")) {
                c.quota.limits.clear();
                for (const auto& [name, n] : q["limits"].items())
                    c.quota.limits[parse_protocol(name)] = n.get<std::uint32_t>();
            }
        }
        if (j.contains("tokens"))
            for (const auto& t : j["tokens"]) {
                PlantedToken p;
                p.token.id = t.at("id").get<std::string>();
                p.token.kind = parse_token_kind(t.at("kind").get<std::string>());
                p.token.marker = parse_marker(t.at("marker_hex").get<std::string>());
                p.token.planted_path = t.value("planted_path", std::string{});
                p.host = Ipv4::parse(t.at("host").get<std::string>());
                c.tokens.push_back(std::move(p));
            }
        if (j.contains("alerts"))
            for (const auto& a : j["alerts"]) {
                AlertRule r;
                r.type = parse_alert_type(a.at("type").get<std::string>());
                switch (r.type) {
                    case AlertType::SignatureSeen: r.sid = a.at("sid").get<std::uint32_t>(); break;
                    case AlertType::TokenSeen: r.token = a.at("token").get<std::string>(); break;
                    case AlertType::QuotaExceeded:
                    case AlertType::InboundContact: r.host = Ipv4::parse(a.at("host").get<std::string>()); break;
                }
                if (a.contains("severity")) r.severity = parse_severity(a["severity"].get<std::string>());
                c.alerts.push_back(r);
            }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    validate_config(c);
    return c;
}

inline Config load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    try {
        return config_from_json(Json::parse(in));
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

/// Copies each configured token onto the scenario host it is planted on.
inline Scenario with_planted_tokens(Scenario sc, const Config& c) {
    for (const auto& p : c.tokens) {
        auto it = std::find_if(sc.hosts.begin(), sc.hosts.end(), [&](const HostSpec& h) { return h.ip == p.host; });
        if (it == sc.hosts.end()) continue;
        HoneypotEmu emu;
        emu.ip = it->ip;
        emu.tokens = it->tokens;
        it->tokens = plant_tokens(std::move(emu), {p.token}).tokens;
    }
    return sc;
}

// --- honeytoken detection ----------------------------------------------------

enum class HitSource : std::uint8_t { Packet, Capture };

constexpr std::string_view to_string(HitSource s) { return s == HitSource::Packet ? "PACKET" : "CAPTURE"; }

struct TokenHit {
    std::string token_id;
    HitSource where = HitSource::Packet;
    SimTime time{0};
    Ipv4 host;               // packet source, or the capturing honeypot
    std::size_t index = 0;   // position in the store that held it
    std::size_t offset = 0;  // byte offset of the marker in payload or record data

    bool operator==(const TokenHit&) const = default;
};

inline Json token_hit_to_json(const TokenHit& h) {
    return Json{{"token", h.token_id}, {"where", to_string(h.where)}, {"time", h.time.count()},
                {"host", h.host.str()}, {"index", h.index},             {"offset", h.offset}};
}

namespace detail {
inline void marker_offsets(std::span<const std::uint8_t> hay, const Honeytoken& t,
                           const std::function<void(std::size_t)>& hit) {
    auto it = hay.begin();
    while (true) {
        it = std::search(it, hay.end(), t.marker.begin(), t.marker.end());
        if (it == hay.end()) return;
        hit(static_cast<std::size_t>(it - hay.begin()));
        ++it;
    }
}
}  // namespace detail

/// Every occurrence of every marker in the packet store and in captured
/// activity. Capture-channel packets are reported through the capture
/// store, not a second time as packets. Ordered by time, then source.
inline std::vector<TokenHit> scan_for_tokens(const StoreSet& stores, const std::vector<Honeytoken>& tokens,
                                             const NetConfig& cfg) {
    std::vector<TokenHit> hits;
    if (tokens.empty()) return hits;
    for (std::size_t i = 0; i < stores.packets.size(); ++i) {
        const Packet& p = stores.packets[i];
        if (classify_direction(p, cfg) == Direction::CaptureChannel) continue;
        for (const auto& t : tokens)
            detail::marker_offsets(p.payload, t, [&](std::size_t off) {
                hits.push_back(TokenHit{t.id, HitSource::Packet, p.timestamp, p.src_ip, i, off});
            });
    }
    for (std::size_t i = 0; i < stores.capture.records.size(); ++i) {
        const StoredRecord& r = stores.capture.records[i];
        for (const auto& t : tokens)
            detail::marker_offsets(r.record.data, t, [&](std::size_t off) {
                hits.push_back(TokenHit{t.id, HitSource::Capture, r.time, r.host, i, off});
            });
    }
    for (std::size_t i = 0; i < stores.capture.raw.size(); ++i) {
        const RawCapture& r = stores.capture.raw[i];
        for (const auto& t : tokens)
            detail::marker_offsets(r.payload, t, [&](std::size_t off) {
                hits.push_back(TokenHit{t.id, HitSource::Capture, r.time, r.host, stores.capture.records.size() + i, off});
            });
    }
    std::stable_sort(hits.begin(), hits.end(), [](const TokenHit& a, const TokenHit& b) {
        return std::tie(a.time, a.where, a.index, a.offset) < std::tie(b.time, b.where, b.index, b.offset);
    });
    return hits;
}

// --- alerting ----------------------------------------------------------------

struct Alert {
    std::size_t rule_index = 0;
    AlertType type = AlertType::SignatureSeen;
    Severity severity = Severity::Medium;
    SimTime time{0};
    std::optional<std::uint64_t> seq;  // triggering packet, if any
    std::string detail;

    bool operator==(const Alert&) const = default;
};

inline Json alert_to_json(const Alert& a) {
    Json j{{"time", a.time.count()}, {"type", to_string(a.type)}, {"severity", to_string(a.severity)},
           {"rule", a.rule_index}};
    if (a.seq) j["seq"] = *a.seq;
    j["detail"] = a.detail;
    return j;
}

/// One alert per (rule, triggering event), ordered by time, then packet, then rule.
inline std::vector<Alert> evaluate_alerts(const std::vector<GatewayEvent>& events, const std::vector<TokenHit>& hits,
                                          const std::vector<AlertRule>& rules) {
    std::vector<Alert> out;
    for (std::size_t r = 0; r < rules.size(); ++r) {
        const AlertRule& rule = rules[r];
        auto emit = [&](SimTime t, std::optional<std::uint64_t> seq, std::string detail) {
            out.push_back(Alert{r, rule.type, rule.severity, t, seq, std::move(detail)});
        };
        switch (rule.type) {
            case AlertType::SignatureSeen:
                for (const auto& e : events)
                    if ((e.kind() == EventKind::Alert || e.kind() == EventKind::Rewritten) && e.sid() == rule.sid)
                        emit(e.time, e.seq, "sid " + std::to_string(rule.sid) + " " + std::string(to_string(e.kind())));
                break;
            case AlertType::TokenSeen:
                for (const auto& h : hits)
                    if (h.token_id == rule.token)
                        emit(h.time, std::nullopt,
                             "token " + h.token_id + " in " + std::string(to_string(h.where)) + " from " + h.host.str());
                break;
            case AlertType::QuotaExceeded:
                for (const auto& e : events)
                    if (auto* q = std::get_if<event::QuotaDropped>(&e.detail); q && q->honeypot_ip == rule.host)
                        emit(e.time, e.seq, "quota exceeded by " + rule.host.str() + " (" +
                                                std::string(to_string(q->protocol)) + ")");
                break;
            case AlertType::InboundContact: {
                auto first = std::find_if(events.begin(), events.end(), [&](const GatewayEvent& e) {
                    return e.direction == Direction::Inbound && e.flow.dst_ip == rule.host;
                });
                if (first != events.end())
                    emit(first->time, first->seq, "first inbound contact to " + rule.host.str() + " from " +
                                                      first->flow.src_ip.str());
                break;
            }
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const Alert& a, const Alert& b) {
        auto sa = a.seq.value_or(UINT64_MAX);
        auto sb = b.seq.value_or(UINT64_MAX);
        return std::tie(a.time, sa, a.rule_index) < std::tie(b.time, sb, b.rule_index);
    });
    return out;
}

// --- report ------------------------------------------------------------------

struct Report {
    std::uint64_t total_bytes = 0;
    std::uint64_t total_packets = 0;
    std::uint64_t unique_source_ips = 0;
    std::map<std::uint32_t, std::uint64_t> per_sid_counts;
    std::map<std::uint16_t, std::uint64_t> per_service_attempts;
    std::optional<SimTime> time_to_first_contact;
    std::uint64_t quota_drops = 0;
    std::uint64_t tokens_exfiltrated = 0;
    std::uint64_t corrupt_lines = 0;

    bool operator==(const Report&) const = default;
};

/// Computes the report over already loaded stores.
inline Report compute_report(const StoreSet& s, const NetConfig& cfg, const std::vector<Honeytoken>& tokens) {
    Report r;
    std::set<Ipv4> sources;
    std::map<std::uint16_t, std::set<FlowKey>> flows_per_port;
    std::set<FlowKey> seen;
    for (const Packet& p : s.packets) {
        ++r.total_packets;
        r.total_bytes += ip_total_length(p);
        const FlowKey key = flow_key(p);
        const bool is_reply = seen.contains(FlowKey{p.dst_ip, p.src_ip, p.protocol, p.dst_port, p.src_port});
        seen.insert(key);
        if (classify_direction(p, cfg) != Direction::Inbound) continue;
        sources.insert(p.src_ip);
        if (!r.time_to_first_contact || p.timestamp < *r.time_to_first_contact) r.time_to_first_contact = p.timestamp;
        // Answers to connections the honeypot opened are not attempts on a service.
        if (cfg.honeypot_ips.contains(p.dst_ip) && !is_reply) flows_per_port[p.dst_port].insert(key);
    }
    r.unique_source_ips = sources.size();
    for (const auto& [port, flows] : flows_per_port) r.per_service_attempts[port] = flows.size();
    for (const auto& e : s.events) {
        if ((e.kind() == EventKind::Alert || e.kind() == EventKind::Rewritten) && e.sid()) ++r.per_sid_counts[*e.sid()];
        if (e.kind() == EventKind::QuotaDropped) ++r.quota_drops;
    }
    std::set<std::string> exfiltrated;
    for (const auto& h : scan_for_tokens(s, tokens, cfg))
        if (h.where == HitSource::Packet) exfiltrated.insert(h.token_id);
    r.tokens_exfiltrated = exfiltrated.size();
    return r;
}

/// Reads a store directory, including the config.json written by `run`.
/// Without one the reference network and no tokens are assumed.
inline Report compute_report(const std::filesystem::path& dir) {
    Config c;
    if (std::filesystem::exists(dir / store_files::kConfig)) c = load_config(dir / store_files::kConfig);
    LoadedStores l = read_store_dir(dir);
    Report r = compute_report(l.stores, c.net, c.all_tokens());
    r.corrupt_lines = l.corrupt_lines();
    return r;
}

inline Json report_to_json(const Report& r) {
    Json sids = Json::object();
    for (const auto& [sid, n] : r.per_sid_counts) sids[std::to_string(sid)] = n;
    Json ports = Json::object();
    for (const auto& [port, n] : r.per_service_attempts) ports[std::to_string(port)] = n;
    Json j{{"total_bytes", r.total_bytes},
           {"total_packets", r.total_packets},
           {"unique_source_ips", r.unique_source_ips},
           {"per_sid_counts", sids},
           {"per_service_attempts", ports}};
    j["time_to_first_contact_us"] = r.time_to_first_contact ? Json(r.time_to_first_contact->count()) : Json(nullptr);
    j["quota_drops"] = r.quota_drops;
    j["tokens_exfiltrated"] = r.tokens_exfiltrated;
    j["corrupt_lines"] = r.corrupt_lines;
    return j;
}

inline std::string format_duration(SimTime t) {
    std::ostringstream os;
    os << t.count() / 1'000'000 << '.';
    auto frac = std::to_string(t.count() % 1'000'000);
    os << std::string(6 - frac.size(), '0') << frac << " s";
    return os.str();
}

inline std::string report_table(const Report& r) {
    std::ostringstream os;
    auto row = [&](const std::string& k, const std::string& v) {
        os << "  " << k << std::string(k.size() < 24 ? 24 - k.size() : 1, ' ') << v << '\n';
    };
    os << "Traffic report\n";
    row("total packets", std::to_string(r.total_packets));
    row("total bytes", std::to_string(r.total_bytes));
    row("unique source IPs", std::to_string(r.unique_source_ips));
    row("first contact", r.time_to_first_contact ? format_duration(*r.time_to_first_contact) : "none");
    row("quota drops", std::to_string(r.quota_drops));
    row("tokens exfiltrated", std::to_string(r.tokens_exfiltrated));
    row("corrupt store lines", std::to_string(r.corrupt_lines));
    os << "Signature hits\n";
    if (r.per_sid_counts.empty()) os << "  (none)\n";
    for (const auto& [sid, n] : r.per_sid_counts) row("sid " + std::to_string(sid), std::to_string(n));
    os << "Service attempts (distinct inbound flows)\n";
    if (r.per_service_attempts.empty()) os << "  (none)\n";
    for (const auto& [port, n] : r.per_service_attempts) row("port " + std::to_string(port), std::to_string(n));
    return os.str();
}

}  // namespace honeynet
