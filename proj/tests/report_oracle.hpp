#pragma once

// Brute-force recount of the traffic report straight from the store files.
// Works on raw JSON with its own address arithmetic; it shares no parsing or
// classification code with the library.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

namespace honeynet::testing {

struct OracleReport {
    std::uint64_t total_bytes = 0;
    std::uint64_t total_packets = 0;
    std::uint64_t unique_source_ips = 0;
    std::map<std::uint32_t, std::uint64_t> per_sid_counts;
    std::map<std::uint16_t, std::uint64_t> per_service_attempts;
    std::optional<std::int64_t> first_contact_us;
    std::uint64_t quota_drops = 0;
    std::uint64_t tokens_exfiltrated = 0;
    std::uint64_t corrupt_lines = 0;
};

namespace oracle_detail {

inline std::uint32_t ip_value(const std::string& dotted) {
    std::uint32_t v = 0;
    int octet = 0;
    int shift = 24;
    for (char c : dotted) {
        if (c == '.') {
            v |= static_cast<std::uint32_t>(octet) << shift;
            shift -= 8;
            octet = 0;
        } else {
            octet = octet * 10 + (c - '0');
        }
    }
    return v | static_cast<std::uint32_t>(octet);
}

inline std::vector<nlohmann::json> read_lines(const std::filesystem::path& p, std::uint64_t& corrupt) {
    std::vector<nlohmann::json> out;
    std::ifstream in(p);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(nlohmann::json::parse(line));
        } catch (...) {
            ++corrupt;
        }
    }
    return out;
}

}  // namespace oracle_detail

inline OracleReport oracle_report(const std::filesystem::path& dir) {
    using nlohmann::json;
    using namespace oracle_detail;
    OracleReport r;

    // Network: reference defaults unless config.json says otherwise.
    std::uint32_t net = ip_value("10.1.0.0");
    std::uint32_t mask = 0xFFFFFFC0u;
    std::uint32_t collector = ip_value("192.0.2.1");
    unsigned capture_port = 1101;
    std::set<std::uint32_t> honeypots{ip_value("10.1.0.5"), ip_value("10.1.0.6")};
    std::vector<std::string> marker_hex;
    if (std::filesystem::exists(dir / "config.json")) {
        std::ifstream in(dir / "config.json");
        json c = json::parse(in);
        const json& n = c["network"];
        std::string subnet = n["honeynet_subnet"];
        auto slash = subnet.find('/');
        int bits = std::stoi(subnet.substr(slash + 1));
        mask = bits == 0 ? 0 : 0xFFFFFFFFu << (32 - bits);
        net = ip_value(subnet.substr(0, slash)) & mask;
        collector = ip_value(n["collector_ip"]);
        capture_port = n["capture_port"];
        honeypots.clear();
        for (const auto& h : n["honeypot_ips"]) honeypots.insert(ip_value(h));
        for (const auto& t : c["tokens"]) marker_hex.push_back(t["marker_hex"]);
    }
    auto inside = [&](std::uint32_t ip) { return (ip & mask) == net; };

    // A packet missing any field the report needs is as corrupt as bad JSON.
    std::vector<json> packets;
    for (auto& p : read_lines(dir / "packets.jsonl", r.corrupt_lines)) {
        bool complete = p.is_object();
        for (const char* k : {"src_ip", "dst_ip", "protocol", "src_port", "dst_port", "payload", "timestamp"})
            complete = complete && p.contains(k);
        if (complete) packets.push_back(std::move(p));
        else ++r.corrupt_lines;
    }

    std::set<std::uint32_t> sources;
    std::map<std::uint16_t, std::set<std::tuple<std::uint32_t, std::uint32_t, std::string, unsigned, unsigned>>> flows;
    std::set<std::string> exfiltrated;
    for (std::size_t i = 0; i < packets.size(); ++i) {
        const json& p = packets[i];
        const std::string proto = p["protocol"];
        const std::string payload = p["payload"];
        const std::uint32_t src = ip_value(p["src_ip"]);
        const std::uint32_t dst = ip_value(p["dst_ip"]);
        const unsigned sport = p["src_port"];
        const unsigned dport = p["dst_port"];
        std::size_t l4 = proto == "TCP" ? 20 : proto == "UDP" || proto == "ICMP" ? 8 : 0;
        r.total_bytes += 20 + l4 + payload.size() / 2;
        ++r.total_packets;

        const bool capture = proto == "UDP" && dst == collector && dport == capture_port;
        if (!capture)
            for (std::size_t t = 0; t < marker_hex.size(); ++t)
                for (std::size_t at = payload.find(marker_hex[t]); at != std::string::npos;
                     at = payload.find(marker_hex[t], at + 1))
                    if (at % 2 == 0) exfiltrated.insert(marker_hex[t]);

        if (capture || inside(src) || !inside(dst)) continue;
        sources.insert(src);
        std::int64_t ts = p["timestamp"];
        if (!r.first_contact_us || ts < *r.first_contact_us) r.first_contact_us = ts;
        if (!honeypots.contains(dst)) continue;
        bool reply = false;
        for (std::size_t k = 0; k < i && !reply; ++k) {
            const json& q = packets[k];
            reply = q["protocol"] == proto && ip_value(q["src_ip"]) == dst && ip_value(q["dst_ip"]) == src &&
                    q["src_port"] == dport && q["dst_port"] == sport;
        }
        if (!reply) flows[static_cast<std::uint16_t>(dport)].insert({src, dst, proto, sport, dport});
    }
    r.unique_source_ips = sources.size();
    for (const auto& [port, f] : flows) r.per_service_attempts[port] = f.size();

    for (const auto& e : read_lines(dir / "events.jsonl", r.corrupt_lines)) {
        const std::string kind = e.value("kind", "");
        if ((kind == "ALERT" || kind == "REWRITTEN") && e.contains("sid") && !e["sid"].is_null())
            ++r.per_sid_counts[e["sid"].get<std::uint32_t>()];
        if (kind == "QUOTA_DROPPED") ++r.quota_drops;
    }
    read_lines(dir / "forwarded.jsonl", r.corrupt_lines);
    read_lines(dir / "capture.jsonl", r.corrupt_lines);
    read_lines(dir / "capture_raw.jsonl", r.corrupt_lines);
    r.tokens_exfiltrated = exfiltrated.size();
    return r;
}

}  // namespace honeynet::testing
