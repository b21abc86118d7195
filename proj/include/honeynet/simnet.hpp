#pragma once

/// @file simnet.hpp
/// @brief Deterministic discrete-event harness: scripted hosts, banner-level
/// honeypot services, and the inline gateway between every pair of hosts.
///
/// Every packet a host sends is presented to the gateway at its send time.
/// A forwarded packet reaches its destination after a fixed latency plus a
/// seeded jitter; a diverted packet goes to the collector and nowhere else.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "honeynet/capture.hpp"
#include "honeynet/honeytoken.hpp"
#include "honeynet/honeywall.hpp"
#include "honeynet/rulelang.hpp"
#include "honeynet/stores.hpp"

namespace honeynet {

class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class HostRole : std::uint8_t { Attacker, Honeypot, ExternalVictim };

constexpr std::string_view to_string(HostRole r) {
    switch (r) {
        case HostRole::Attacker: return "ATTACKER";
        case HostRole::Honeypot: return "HONEYPOT";
        case HostRole::ExternalVictim: return "EXTERNAL_VICTIM";
    }
    return "ATTACKER";
}

inline HostRole parse_host_role(std::string_view s) {
    if (s == "ATTACKER") return HostRole::Attacker;
    if (s == "HONEYPOT") return HostRole::Honeypot;
    if (s == "EXTERNAL_VICTIM") return HostRole::ExternalVictim;
    throw ScenarioError("unknown host role '" + std::string(s) + "'");
}

enum class StepAction : std::uint8_t { Connect, Send, Exploit, Scan, Exfiltrate, Command };

constexpr std::string_view to_string(StepAction a) {
    switch (a) {
        case StepAction::Connect: return "CONNECT";
        case StepAction::Send: return "SEND";
        case StepAction::Exploit: return "EXPLOIT";
        case StepAction::Scan: return "SCAN";
        case StepAction::Exfiltrate: return "EXFILTRATE";
        case StepAction::Command: return "COMMAND";
    }
    return "CONNECT";
}

inline StepAction parse_step_action(std::string_view s) {
    if (s == "CONNECT") return StepAction::Connect;
    if (s == "SEND") return StepAction::Send;
    if (s == "EXPLOIT") return StepAction::Exploit;
    if (s == "SCAN") return StepAction::Scan;
    if (s == "EXFILTRATE") return StepAction::Exfiltrate;
    if (s == "COMMAND") return StepAction::Command;
    throw ScenarioError("unknown step action '" + std::string(s) + "'");
}

/// One scripted action. Fields not used by the action stay at their defaults.
struct Step {
    /// Absolute time for top-level steps; offset from the compromise for
    /// steps in a post-compromise script.
    SimTime at{0};
    /// Acting host. Post-compromise steps act from the compromised honeypot.
    Ipv4 host;
    StepAction action = StepAction::Connect;

    Ipv4 target;               // CONNECT, SEND, EXPLOIT, EXFILTRATE
    std::uint16_t port = 0;    // CONNECT, SEND, EXPLOIT, EXFILTRATE
    Bytes payload;             // SEND, EXPLOIT, optional for CONNECT and SCAN

    std::vector<Ipv4> targets;          // SCAN
    std::vector<std::uint16_t> ports;   // SCAN
    SimTime interval{1000};             // SCAN, spacing between probes

    std::string token;  // EXFILTRATE; COMMAND output that reads a token

    std::string command;  // COMMAND
    Bytes input;
    Bytes output;
    std::uint32_t pid = 0;
    std::uint32_t uid = 0;

    std::vector<Step> post_compromise;  // EXPLOIT against a honeypot

    bool operator==(const Step&) const = default;
};

struct HostSpec {
    HostRole role = HostRole::Attacker;
    Ipv4 ip;
    /// Listening ports. Attackers accept on every port and ignore this.
    std::vector<std::uint16_t> services;
    std::vector<Honeytoken> tokens;

    bool operator==(const HostSpec&) const = default;
};

inline const std::vector<std::uint16_t> kDefaultHoneypotServices{21, 22, 80};
inline const Bytes kDefaultExploitMarker{0xEB, 0x02, 0xEB, 0x02, 0xEB, 0x02};

struct Scenario {
    std::string name;
    std::uint64_t seed = 0;
    SimTime duration{0};
    Bytes exploit_marker = kDefaultExploitMarker;
    std::vector<HostSpec> hosts;
    std::vector<Step> steps;

    const HostSpec* find_host(Ipv4 ip) const {
        for (const auto& h : hosts)
            if (h.ip == ip) return &h;
        return nullptr;
    }

    bool operator==(const Scenario&) const = default;
};

// --- service emulation -------------------------------------------------------

namespace banners {
inline constexpr std::string_view kFtp = "220 (vsFTPd 1.0.1)\r\n";
inline constexpr std::string_view kSsh = "SSH-1.99-OpenSSH_3.0.2p1\r\n";
inline constexpr std::string_view kHttp =
    "HTTP/1.1 200 OK\r\nServer: Apache/1.3.23 (Unix)\r\nContent-Length: 0\r\n\r\n";
}  // namespace banners

/// Text a service sends once a client completes the handshake. HTTP only
/// answers requests, so it has no greeting.
inline std::string_view service_greeting(std::uint16_t port) {
    switch (port) {
        case 21: return banners::kFtp;
        case 22: return banners::kSsh;
        default: return {};
    }
}

inline std::string_view service_reply(std::uint16_t port) { return port == 80 ? banners::kHttp : std::string_view{}; }

/// Runtime view of a honeypot.
struct HoneypotEmu {
    Ipv4 ip;
    std::vector<std::uint16_t> services = kDefaultHoneypotServices;
    bool compromised = false;
    std::vector<Honeytoken> tokens;

    const Honeytoken* find_token(std::string_view id) const {
        for (const auto& t : tokens)
            if (t.id == id) return &t;
        return nullptr;
    }
};

/// Attaches tokens to a honeypot. Throws ConfigError if any id or marker
/// would then occur twice on it.
inline HoneypotEmu plant_tokens(HoneypotEmu honeypot, const std::vector<Honeytoken>& tokens) {
    std::vector<Honeytoken> all = honeypot.tokens;
    all.insert(all.end(), tokens.begin(), tokens.end());
    check_unique_tokens(all);
    honeypot.tokens = std::move(all);
    return honeypot;
}

// --- event log ---------------------------------------------------------------

enum class HostEventKind : std::uint8_t { Delivered, Undelivered, Collected, Compromised, ExploitFailed, Emit };

constexpr std::string_view to_string(HostEventKind k) {
    switch (k) {
        case HostEventKind::Delivered: return "DELIVERED";
        case HostEventKind::Undelivered: return "UNDELIVERED";
        case HostEventKind::Collected: return "COLLECTED";
        case HostEventKind::Compromised: return "COMPROMISED";
        case HostEventKind::ExploitFailed: return "EXPLOIT_FAILED";
        case HostEventKind::Emit: return "EMIT";
    }
    return "DELIVERED";
}

inline HostEventKind parse_host_event_kind(std::string_view s) {
    for (auto k : {HostEventKind::Delivered, HostEventKind::Undelivered, HostEventKind::Collected,
                   HostEventKind::Compromised, HostEventKind::ExploitFailed, HostEventKind::Emit})
        if (to_string(k) == s) return k;
    throw ConfigError("unknown host event kind '" + std::string(s) + "'");
}

struct HostEvent {
    SimTime time{0};
    std::uint64_t order = 0;  // position in the run's total order
    HostEventKind kind = HostEventKind::Delivered;
    Ipv4 host;
    /// Tap sequence number of the packet involved, if any.
    std::optional<std::uint64_t> seq;
    std::string detail;

    bool operator==(const HostEvent&) const = default;
};

inline Json host_event_to_json(const HostEvent& e) {
    Json j{{"order", e.order}, {"time", e.time.count()}, {"kind", to_string(e.kind)}, {"host", e.host.str()}};
    if (e.seq) j["seq"] = *e.seq;
    if (!e.detail.empty()) j["detail"] = e.detail;
    return j;
}

inline HostEvent host_event_from_json(const Json& j) {
    HostEvent e;
    e.order = j.at("order").get<std::uint64_t>();
    e.time = SimTime(j.at("time").get<std::int64_t>());
    e.kind = parse_host_event_kind(j.at("kind").get<std::string>());
    e.host = Ipv4::parse(j.at("host").get<std::string>());
    if (j.contains("seq")) e.seq = j["seq"].get<std::uint64_t>();
    if (j.contains("detail")) e.detail = j["detail"].get<std::string>();
    return e;
}

struct EventLog {
    StoreSet stores;
    std::vector<HostEvent> host_events;
    std::map<Ipv4, bool> compromised;  // final state of every honeypot and victim

    std::size_t compromised_count(HostRole role, const Scenario& sc) const {
        std::size_t n = 0;
        for (const auto& [ip, c] : compromised) {
            const HostSpec* h = sc.find_host(ip);
            if (c && h && h->role == role) ++n;
        }
        return n;
    }
};

/// Writes the gateway stores plus hostlog.jsonl.
inline void write_event_log(const std::filesystem::path& dir, const EventLog& log) {
    write_store_dir(dir, log.stores);
    write_jsonl_file(dir / store_files::kHostLog, to_lines(log.host_events, host_event_to_json));
}

// --- validation --------------------------------------------------------------

namespace detail {

inline bool contains_bytes(std::span<const std::uint8_t> hay, std::span<const std::uint8_t> needle) {
    if (needle.empty()) return false;
    return std::search(hay.begin(), hay.end(), needle.begin(), needle.end()) != hay.end();
}

inline void validate_steps(const std::vector<Step>& steps, const Scenario& sc, const std::string& where,
                           const HostSpec* implicit_actor, const std::vector<Honeytoken>& all_tokens) {
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const Step& s = steps[i];
        const std::string at = where + "[" + std::to_string(i) + "]";
        auto fail = [&](const std::string& why) { throw ScenarioError(at + ": " + why); };

        if (s.at.count() < 0) fail("negative time");
        if (!implicit_actor && s.at > sc.duration) fail("time exceeds scenario duration");
        const HostSpec* actor = implicit_actor ? implicit_actor : sc.find_host(s.host);
        if (!actor) fail("unknown host " + s.host.str());

        for (const Bytes* b : {&s.payload, &s.input, &s.output}) {
            if (b->size() > kMaxPayload) fail("payload exceeds " + std::to_string(kMaxPayload) + " bytes");
            for (const auto& t : all_tokens)
                if (contains_bytes(*b, t.marker)) fail("payload contains the marker of token '" + t.id + "'");
        }

        switch (s.action) {
            case StepAction::Connect: break;
            case StepAction::Send:
            case StepAction::Exploit:
                if (s.payload.empty()) fail(std::string(to_string(s.action)) + " requires a payload");
                break;
            case StepAction::Scan:
                if (s.targets.empty() || s.ports.empty()) fail("SCAN requires targets and ports");
                if (s.interval.count() < 0) fail("negative scan interval");
                break;
            case StepAction::Exfiltrate:
            case StepAction::Command:
                if (actor->role != HostRole::Honeypot) fail(std::string(to_string(s.action)) + " must run on a honeypot");
                break;
        }
        if (s.action == StepAction::Exfiltrate || (s.action == StepAction::Command && !s.token.empty())) {
            bool planted = std::any_of(actor->tokens.begin(), actor->tokens.end(),
                                       [&](const Honeytoken& t) { return t.id == s.token; });
            if (!planted) fail("token '" + s.token + "' is not planted on " + actor->ip.str());
        }
        if (s.action == StepAction::Command && s.input.size() > kMaxCaptureData)
            fail("command input exceeds capture record size");

        if (!s.post_compromise.empty()) {
            if (s.action != StepAction::Exploit) fail("only EXPLOIT steps carry a post-compromise script");
            const HostSpec* victim = sc.find_host(s.target);
            if (!victim || victim->role != HostRole::Honeypot)
                fail("post-compromise script requires a honeypot target");
            validate_steps(s.post_compromise, sc, at + ".post_compromise", victim, all_tokens);
        }
    }
}

}  // namespace detail

/// Throws ScenarioError on the first problem found.
inline void validate_scenario(const Scenario& sc, const NetConfig& cfg) {
    if (sc.duration.count() < 0) throw ScenarioError("negative duration");
    if (sc.exploit_marker.empty()) throw ScenarioError("exploit marker must not be empty");
    std::set<Ipv4> ips;
    std::vector<Honeytoken> all_tokens;
    for (std::size_t i = 0; i < sc.hosts.size(); ++i) {
        const HostSpec& h = sc.hosts[i];
        const std::string at = "hosts[" + std::to_string(i) + "]";
        if (!ips.insert(h.ip).second) throw ScenarioError(at + ": duplicate ip " + h.ip.str());
        if (h.ip == cfg.collector_ip) throw ScenarioError(at + ": host uses the collector address");
        if (h.role == HostRole::Honeypot) {
            if (!cfg.honeypot_ips.contains(h.ip))
                throw ScenarioError(at + ": " + h.ip.str() + " is not a configured honeypot");
        } else if (cfg.in_honeynet(h.ip)) {
            throw ScenarioError(at + ": " + std::string(to_string(h.role)) + " inside the honeynet subnet");
        }
        if (!h.tokens.empty() && h.role != HostRole::Honeypot)
            throw ScenarioError(at + ": tokens can only be planted on honeypots");
        all_tokens.insert(all_tokens.end(), h.tokens.begin(), h.tokens.end());
    }
    try {
        check_unique_tokens(all_tokens);
    } catch (const ConfigError& e) {
        throw ScenarioError(e.what());
    }
    for (const auto& t : all_tokens) {
        for (auto port : kDefaultHoneypotServices) {
            auto g = service_greeting(port);
            auto r = service_reply(port);
            if (detail::contains_bytes(to_bytes(g), t.marker) || detail::contains_bytes(to_bytes(r), t.marker))
                throw ScenarioError("marker of token '" + t.id + "' occurs in a service banner");
        }
    }
    detail::validate_steps(sc.steps, sc, "steps", nullptr, all_tokens);
}

// --- JSON --------------------------------------------------------------------

namespace detail {

inline Bytes payload_from_json(const Json& j, const char* text_key, const char* hex_key) {
    if (j.contains(text_key) && j.contains(hex_key))
        throw ScenarioError(std::string("both '") + text_key + "' and '" + hex_key + "' given");
    if (j.contains(text_key)) return to_bytes(j[text_key].get<std::string>());
    if (j.contains(hex_key)) {
        try {
            return hex_decode(j[hex_key].get<std::string>());
        } catch (const std::invalid_argument& e) {
            throw ScenarioError(std::string(hex_key) + ": " + e.what());
        }
    }
    return {};
}

inline void payload_to_json(Json& j, const Bytes& b, const char* text_key, const char* hex_key) {
    if (b.empty()) return;
    bool printable = std::all_of(b.begin(), b.end(), [](std::uint8_t c) {
        return (c >= 0x20 && c < 0x7F) || c == '\r' || c == '\n' || c == '\t';
    });
    if (printable) j[text_key] = to_string(b);
    else j[hex_key] = hex_encode(b);
}

inline std::vector<Ipv4> targets_from_json(const Json& j) {
    std::vector<Ipv4> out;
    if (j.is_string()) {
        Cidr c = Cidr::parse(j.get<std::string>());
        for (std::uint64_t i = 0; i < c.size(); ++i) out.push_back(c.at(i));
        return out;
    }
    for (const auto& t : j) out.push_back(Ipv4::parse(t.get<std::string>()));
    return out;
}

inline Step step_from_json(const Json& j, bool nested) {
    Step s;
    s.action = parse_step_action(j.at("action").get<std::string>());
    s.at = SimTime(j.at(nested ? "after_us" : "at_us").get<std::int64_t>());
    if (!nested) s.host = Ipv4::parse(j.at("host").get<std::string>());
    if (j.contains("target")) s.target = Ipv4::parse(j["target"].get<std::string>());
    if (j.contains("port")) s.port = j["port"].get<std::uint16_t>();
    s.payload = payload_from_json(j, "payload", "payload_hex");
    if (j.contains("targets")) s.targets = targets_from_json(j["targets"]);
    if (j.contains("ports")) s.ports = j["ports"].get<std::vector<std::uint16_t>>();
    if (j.contains("interval_us")) s.interval = SimTime(j["interval_us"].get<std::int64_t>());
    if (j.contains("token")) s.token = j["token"].get<std::string>();
    if (j.contains("command")) s.command = j["command"].get<std::string>();
    s.input = payload_from_json(j, "input", "input_hex");
    s.output = payload_from_json(j, "output", "output_hex");
    if (j.contains("pid")) s.pid = j["pid"].get<std::uint32_t>();
    if (j.contains("uid")) s.uid = j["uid"].get<std::uint32_t>();
    if (j.contains("post_compromise"))
        for (const auto& n : j["post_compromise"]) s.post_compromise.push_back(step_from_json(n, true));

    bool needs_target = s.action == StepAction::Connect || s.action == StepAction::Send ||
                        s.action == StepAction::Exploit || s.action == StepAction::Exfiltrate;
    if (needs_target && (!j.contains("target") || !j.contains("port")))
        throw ScenarioError(std::string(to_string(s.action)) + " requires 'target' and 'port'");
    if (s.action == StepAction::Command && s.command.empty()) throw ScenarioError("COMMAND requires 'command'");
    if (s.action == StepAction::Exfiltrate && s.token.empty()) throw ScenarioError("EXFILTRATE requires 'token'");
    return s;
}

inline Json step_to_json(const Step& s, bool nested) {
    Json j;
    j[nested ? "after_us" : "at_us"] = s.at.count();
    if (!nested) j["host"] = s.host.str();
    j["action"] = to_string(s.action);
    switch (s.action) {
        case StepAction::Connect:
        case StepAction::Send:
        case StepAction::Exploit:
        case StepAction::Exfiltrate:
            j["target"] = s.target.str();
            j["port"] = s.port;
            break;
        case StepAction::Scan: {
            Json t = Json::array();
            for (Ipv4 ip : s.targets) t.push_back(ip.str());
            j["targets"] = t;
            j["ports"] = s.ports;
            j["interval_us"] = s.interval.count();
            break;
        }
        case StepAction::Command:
            j["command"] = s.command;
            j["pid"] = s.pid;
            j["uid"] = s.uid;
            payload_to_json(j, s.input, "input", "input_hex");
            payload_to_json(j, s.output, "output", "output_hex");
            break;
    }
    payload_to_json(j, s.payload, "payload", "payload_hex");
    if (!s.token.empty()) j["token"] = s.token;
    if (!s.post_compromise.empty()) {
        Json p = Json::array();
        for (const auto& n : s.post_compromise) p.push_back(step_to_json(n, true));
        j["post_compromise"] = p;
    }
    return j;
}

}  // namespace detail

/// Parses a scenario document. Structural problems raise ScenarioError;
/// cross-references are checked by validate_scenario.
inline Scenario scenario_from_json(const Json& j) {
    try {
        Scenario sc;
        sc.name = j.value("name", std::string{});
        sc.seed = j.at("seed").get<std::uint64_t>();
        sc.duration = SimTime(j.at("duration_us").get<std::int64_t>());
        if (j.contains("exploit_marker_hex")) sc.exploit_marker = hex_decode(j["exploit_marker_hex"].get<std::string>());
        for (const auto& h : j.at("hosts")) {
            HostSpec spec;
            spec.role = parse_host_role(h.at("role").get<std::string>());
            spec.ip = Ipv4::parse(h.at("ip").get<std::string>());
            if (h.contains("services")) spec.services = h["services"].get<std::vector<std::uint16_t>>();
            else if (spec.role == HostRole::Honeypot) spec.services = kDefaultHoneypotServices;
            sc.hosts.push_back(std::move(spec));
        }
        if (j.contains("steps"))
            for (const auto& s : j["steps"]) sc.steps.push_back(detail::step_from_json(s, false));
        return sc;
    } catch (const Json::exception& e) {
        throw ScenarioError(std::string("malformed scenario: ") + e.what());
    } catch (const ConfigError& e) {
        throw ScenarioError(std::string("malformed scenario: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ScenarioError(std::string("malformed scenario: ") + e.what());
    }
}

inline Json scenario_to_json(const Scenario& sc) {
    Json j{{"name", sc.name}, {"seed", sc.seed}, {"duration_us", sc.duration.count()}};
    if (sc.exploit_marker != kDefaultExploitMarker) j["exploit_marker_hex"] = hex_encode(sc.exploit_marker);
    Json hosts = Json::array();
    for (const auto& h : sc.hosts)
        hosts.push_back(Json{{"role", to_string(h.role)}, {"ip", h.ip.str()}, {"services", h.services}});
    j["hosts"] = hosts;
    Json steps = Json::array();
    for (const auto& s : sc.steps) steps.push_back(detail::step_to_json(s, false));
    j["steps"] = steps;
    return j;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError("cannot open scenario " + path.string());
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw ScenarioError(path.string() + ": " + e.what());
    }
    return scenario_from_json(j);
}

// --- simulation --------------------------------------------------------------

/// Timing of the emulated network.
struct SimTiming {
    SimTime link_latency{200};
    std::uint64_t link_jitter_us = 100;  // uniform in [0, jitter)
    SimTime host_delay{50};
    std::uint64_t host_jitter_us = 50;
};

class Simulation {
public:
    Simulation(const Scenario& sc, const NetConfig& cfg, const RuleSet& rules, const QuotaPolicy& policy,
               SimTiming timing = {})
        : sc_(sc), timing_(timing), rng_(sc.seed), gateway_(cfg, rules, policy, log_.stores) {
        validate_scenario(sc_, cfg);
        for (const auto& spec : sc_.hosts) {
            HostRuntime h;
            h.spec = &spec;
            h.next_port = static_cast<std::uint16_t>(1024 + rng_() % 30000);
            if (spec.role == HostRole::Honeypot) {
                h.emu.ip = spec.ip;
                h.emu.services = spec.services;
                h.emu = plant_tokens(std::move(h.emu), spec.tokens);
                h.sensor.emplace(spec.ip, cfg);
            }
            if (spec.role != HostRole::Attacker) log_.compromised[spec.ip] = false;
            hosts_.emplace(spec.ip, std::move(h));
        }
    }

    EventLog run() && {
        for (const auto& step : sc_.steps) {
            const Step* s = &step;
            schedule(s->at, [this, s] { run_step(*s, s->host); });
        }
        while (!queue_.empty()) {
            Pending next = queue_.top();
            queue_.pop();
            if (next.time > sc_.duration) break;
            now_ = next.time;
            actions_[next.id]();
            actions_.erase(next.id);
        }
        for (const auto& [ip, h] : hosts_)
            if (h.spec->role == HostRole::Honeypot) log_.compromised[ip] = h.emu.compromised;
        return std::move(log_);
    }

private:
    struct Conn {
        bool established = false;
        Bytes payload;
    };

    struct HostRuntime {
        const HostSpec* spec = nullptr;
        HoneypotEmu emu;  // meaningful for honeypots only
        std::optional<CaptureSensor> sensor;
        std::uint16_t next_port = 1024;
        std::map<FlowKey, Conn> outgoing;   // keyed by the flow this host sends on
        std::set<FlowKey> incoming;         // handshakes this host accepted, keyed by the peer's flow
        bool victim_compromised = false;

        bool listens(std::uint16_t port) const {
            if (spec->role == HostRole::Attacker) return true;
            return std::find(spec->services.begin(), spec->services.end(), port) != spec->services.end();
        }
    };

    struct Pending {
        SimTime time;
        std::uint64_t id;
        bool operator>(const Pending& o) const { return std::tie(time, id) > std::tie(o.time, o.id); }
    };

    void schedule(SimTime t, std::function<void()> fn) {
        const std::uint64_t id = next_id_++;
        actions_.emplace(id, std::move(fn));
        queue_.push(Pending{t, id});
    }

    SimTime jitter(std::uint64_t range) { return SimTime(range ? static_cast<std::int64_t>(rng_() % range) : 0); }
    SimTime host_delay() { return timing_.host_delay + jitter(timing_.host_jitter_us); }
    SimTime link_delay() { return timing_.link_latency + jitter(timing_.link_jitter_us); }

    void note(HostEventKind kind, Ipv4 host, std::optional<std::uint64_t> seq, std::string detail = {}) {
        log_.host_events.push_back(HostEvent{now_, next_order_++, kind, host, seq, std::move(detail)});
    }

    std::uint16_t ephemeral_port(HostRuntime& h) {
        std::uint16_t p = h.next_port;
        h.next_port = h.next_port >= 60999 ? 1024 : static_cast<std::uint16_t>(h.next_port + 1);
        return p;
    }

    static Packet make_packet(Ipv4 src, std::uint16_t sport, Ipv4 dst, std::uint16_t dport, Protocol proto,
                              TcpFlags flags, Bytes payload, SimTime t) {
        Packet p;
        p.src_mac = MacAddr::for_host(src);
        p.dst_mac = MacAddr::for_host(dst);
        p.src_ip = src;
        p.dst_ip = dst;
        p.protocol = proto;
        p.src_port = sport;
        p.dst_port = dport;
        p.tcp_flags = flags;
        p.payload = std::move(payload);
        p.timestamp = t;
        return recompute_checksums(std::move(p));
    }

    /// Hands a packet to the gateway now and schedules whatever follows.
    void transmit(Packet p) {
        p.timestamp = now_;
        Honeywall::Handled h = gateway_.handle(p);
        switch (h.decision.verdict) {
            case Verdict::Forward: {
                const std::uint64_t seq = h.seq;
                schedule(now_ + link_delay(), [this, pkt = std::move(h.decision.packet), seq] { deliver(pkt, seq); });
                break;
            }
            case Verdict::DivertToCollector: note(HostEventKind::Collected, gateway_.config().collector_ip, h.seq); break;
            case Verdict::Drop: break;
        }
    }

    void send_later(Packet p) {
        schedule(now_ + host_delay(), [this, pkt = std::move(p)]() mutable { transmit(std::move(pkt)); });
    }

    void open_connection(HostRuntime& h, Ipv4 dst, std::uint16_t dport, Bytes payload) {
        const std::uint16_t sport = ephemeral_port(h);
        h.outgoing[FlowKey{h.spec->ip, dst, Protocol::Tcp, sport, dport}] = Conn{false, std::move(payload)};
        transmit(make_packet(h.spec->ip, sport, dst, dport, Protocol::Tcp, kSyn, {}, now_));
    }

    void run_step(const Step& s, Ipv4 actor_ip) {
        HostRuntime& h = hosts_.at(actor_ip);
        switch (s.action) {
            case StepAction::Connect:
            case StepAction::Send:
                open_connection(h, s.target, s.port, s.payload);
                break;
            case StepAction::Exploit:
                exploit_flows_.insert(exploit_key(h, s));
                if (!s.post_compromise.empty()) scripts_[exploit_key(h, s)] = &s.post_compromise;
                open_connection(h, s.target, s.port, s.payload);
                break;
            case StepAction::Scan: {
                std::int64_t k = 0;
                for (Ipv4 target : s.targets)
                    for (std::uint16_t port : s.ports) {
                        const Step* step = &s;
                        schedule(now_ + s.interval * k++, [this, step, actor_ip, target, port] {
                            HostRuntime& a = hosts_.at(actor_ip);
                            TcpFlags flags = step->payload.empty() ? kSyn : kPshAck;
                            transmit(make_packet(a.spec->ip, ephemeral_port(a), target, port, Protocol::Tcp, flags,
                                                 step->payload, now_));
                        });
                    }
                break;
            }
            case StepAction::Exfiltrate:
                open_connection(h, s.target, s.port, token_content(*h.emu.find_token(s.token)));
                break;
            case StepAction::Command: {
                transmit(h.sensor->emit(RecordType::Input, s.pid, s.uid, 0, s.command, s.input, now_));
                note(HostEventKind::Emit, actor_ip, gateway_.state().next_seq - 1, s.command);
                Bytes out = s.output;
                if (!s.token.empty()) {
                    Bytes content = token_content(*h.emu.find_token(s.token));
                    out.insert(out.end(), content.begin(), content.end());
                }
                if (!out.empty()) {
                    if (out.size() > kMaxCaptureData) out.resize(kMaxCaptureData);
                    transmit(h.sensor->emit(RecordType::Output, s.pid, s.uid, 1, s.command, out, now_));
                    note(HostEventKind::Emit, actor_ip, gateway_.state().next_seq - 1, s.command);
                }
                break;
            }
        }
    }

    /// The source port of the next connection this host opens identifies the
    /// exploit's flow before the SYN leaves.
    static FlowKey exploit_key(const HostRuntime& h, const Step& s) {
        return FlowKey{h.spec->ip, s.target, Protocol::Tcp, h.next_port, s.port};
    }

    void deliver(const Packet& p, std::uint64_t seq) {
        auto it = hosts_.find(p.dst_ip);
        if (it == hosts_.end()) {
            note(HostEventKind::Undelivered, p.dst_ip, seq);
            return;
        }
        note(HostEventKind::Delivered, p.dst_ip, seq);
        if (p.protocol != Protocol::Tcp) return;
        HostRuntime& h = it->second;
        const Ipv4 self = h.spec->ip;
        const TcpFlags f = p.tcp_flags;

        if (f.has(TcpFlags::kRst)) {
            h.outgoing.erase(FlowKey{self, p.src_ip, Protocol::Tcp, p.dst_port, p.src_port});
            return;
        }
        if (f.has(TcpFlags::kSyn) && !f.has(TcpFlags::kAck)) {
            TcpFlags reply = h.listens(p.dst_port) ? kSynAck : kRstAck;
            if (reply == kSynAck) h.incoming.insert(flow_key(p));
            send_later(make_packet(self, p.dst_port, p.src_ip, p.src_port, Protocol::Tcp, reply, {}, now_));
            return;
        }
        if (f.has(TcpFlags::kSyn) && f.has(TcpFlags::kAck)) {
            auto c = h.outgoing.find(FlowKey{self, p.src_ip, Protocol::Tcp, p.dst_port, p.src_port});
            if (c == h.outgoing.end() || c->second.established) return;
            c->second.established = true;
            Bytes data = std::move(c->second.payload);
            TcpFlags flags = data.empty() ? kAck : kPshAck;
            send_later(make_packet(self, p.dst_port, p.src_ip, p.src_port, Protocol::Tcp, flags, std::move(data), now_));
            return;
        }

        // Plain ACK or data segment.
        const bool accepted = h.incoming.contains(flow_key(p));
        if (accepted) {
            auto greeting = service_greeting(p.dst_port);
            if (!greeting.empty() && greeted_.insert(flow_key(p)).second)
                send_later(make_packet(self, p.dst_port, p.src_ip, p.src_port, Protocol::Tcp, kPshAck,
                                       to_bytes(greeting), now_));
        }
        if (p.payload.empty()) return;
        if (h.spec->role != HostRole::Attacker && h.listens(p.dst_port)) check_compromise(h, p, seq);
        if (accepted) {
            auto reply = service_reply(p.dst_port);
            if (!reply.empty())
                send_later(make_packet(self, p.dst_port, p.src_ip, p.src_port, Protocol::Tcp, kPshAck,
                                       to_bytes(reply), now_));
        }
    }

    void check_compromise(HostRuntime& h, const Packet& p, std::uint64_t seq) {
        const bool exploit_attempt = exploit_flows_.contains(flow_key(p));
        const bool intact = detail::contains_bytes(p.payload, sc_.exploit_marker);
        const Ipv4 self = h.spec->ip;
        if (!intact) {
            if (exploit_attempt) note(HostEventKind::ExploitFailed, self, seq);
            return;
        }
        bool& flag = h.spec->role == HostRole::Honeypot ? h.emu.compromised : h.victim_compromised;
        if (flag) return;
        flag = true;
        log_.compromised[self] = true;
        note(HostEventKind::Compromised, self, seq, p.src_ip.str());
        auto script = scripts_.find(flow_key(p));
        if (script == scripts_.end() || h.spec->role != HostRole::Honeypot) return;
        for (const Step& s : *script->second) {
            const Step* step = &s;
            schedule(now_ + s.at, [this, step, self] { run_step(*step, self); });
        }
    }

    const Scenario& sc_;
    SimTiming timing_;
    std::mt19937_64 rng_;
    EventLog log_;
    Honeywall gateway_;
    std::map<Ipv4, HostRuntime> hosts_;
    std::map<FlowKey, const std::vector<Step>*> scripts_;
    std::set<FlowKey> exploit_flows_;
    std::set<FlowKey> greeted_;
    std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue_;
    std::map<std::uint64_t, std::function<void()>> actions_;
    std::uint64_t next_id_ = 0;
    std::uint64_t next_order_ = 0;
    SimTime now_{0};
};

/// Validates the scenario, then runs it to completion or to its duration.
inline EventLog run_scenario(const Scenario& sc, const NetConfig& cfg, const RuleSet& rules,
                             const QuotaPolicy& policy) {
    return Simulation(sc, cfg, rules, policy).run();
}

}  // namespace honeynet
