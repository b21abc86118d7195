#pragma once

/// @file trace.hpp
/// @brief JSON Lines packet trace format: one packet per line, field names
/// as in Packet, payload as lowercase hex, timestamp in integer microseconds.

#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "honeynet/netmodel.hpp"

namespace honeynet {

using Json = nlohmann::ordered_json;

inline Json tcp_flags_to_json(TcpFlags f) {
    Json out = Json::array();
    if (f.has(TcpFlags::kSyn)) out.push_back("SYN");
    if (f.has(TcpFlags::kAck)) out.push_back("ACK");
    if (f.has(TcpFlags::kFin)) out.push_back("FIN");
    if (f.has(TcpFlags::kRst)) out.push_back("RST");
    if (f.has(TcpFlags::kPsh)) out.push_back("PSH");
    return out;
}

inline TcpFlags tcp_flags_from_json(const Json& j) {
    TcpFlags f;
    for (const auto& name : j) {
        const auto& s = name.get_ref<const std::string&>();
        if (s == "SYN") f.bits |= TcpFlags::kSyn;
        else if (s == "ACK") f.bits |= TcpFlags::kAck;
        else if (s == "FIN") f.bits |= TcpFlags::kFin;
        else if (s == "RST") f.bits |= TcpFlags::kRst;
        else if (s == "PSH") f.bits |= TcpFlags::kPsh;
        else throw ConfigError("unknown TCP flag '" + s + "'");
    }
    return f;
}

inline Json packet_to_json(const Packet& p) {
    return Json{{"src_mac", p.src_mac.str()},
                {"dst_mac", p.dst_mac.str()},
                {"src_ip", p.src_ip.str()},
                {"dst_ip", p.dst_ip.str()},
                {"protocol", to_string(p.protocol)},
                {"src_port", p.src_port},
                {"dst_port", p.dst_port},
                {"tcp_flags", tcp_flags_to_json(p.tcp_flags)},
                {"ip_checksum", p.ip_checksum},
                {"l4_checksum", p.l4_checksum},
                {"payload", hex_encode(p.payload)},
                {"ttl", p.ttl},
                {"timestamp", p.timestamp.count()}};
}

/// Throws ConfigError (or nlohmann::json::exception) on malformed input.
inline Packet packet_from_json(const Json& j) {
    Packet p;
    p.src_mac = MacAddr::parse(j.at("src_mac").get<std::string>());
    p.dst_mac = MacAddr::parse(j.at("dst_mac").get<std::string>());
    p.src_ip = Ipv4::parse(j.at("src_ip").get<std::string>());
    p.dst_ip = Ipv4::parse(j.at("dst_ip").get<std::string>());
    p.protocol = parse_protocol(j.at("protocol").get<std::string>());
    p.src_port = j.at("src_port").get<std::uint16_t>();
    p.dst_port = j.at("dst_port").get<std::uint16_t>();
    p.tcp_flags = tcp_flags_from_json(j.at("tcp_flags"));
    p.ip_checksum = j.at("ip_checksum").get<std::uint16_t>();
    p.l4_checksum = j.at("l4_checksum").get<std::uint16_t>();
    try {
        p.payload = hex_decode(j.at("payload").get<std::string>());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("payload: ") + e.what());
    }
    p.ttl = j.at("ttl").get<std::uint8_t>();
    p.timestamp = SimTime(j.at("timestamp").get<std::int64_t>());
    validate_packet(p);
    return p;
}

inline std::string packet_to_line(const Packet& p) { return packet_to_json(p).dump(); }

inline Packet packet_from_line(const std::string& line) { return packet_from_json(Json::parse(line)); }

/// Outcome of reading a JSON Lines file where bad lines are tolerated.
struct LineErrors {
    std::size_t count = 0;
    std::vector<std::string> messages;

    void add(std::size_t line_no, const std::string& what) {
        ++count;
        messages.push_back("line " + std::to_string(line_no) + ": " + what);
    }
};

/// Calls `on_line(line_no, text)` for every non-blank line. Exceptions thrown
/// by the callback are recorded in `errors` and reading continues.
inline void for_each_jsonl(std::istream& in, LineErrors& errors,
                           const std::function<void(std::size_t, const std::string&)>& on_line) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            on_line(line_no, line);
        } catch (const std::exception& e) {
            errors.add(line_no, e.what());
        }
    }
}

inline std::vector<Packet> read_trace(std::istream& in, LineErrors& errors) {
    std::vector<Packet> out;
    for_each_jsonl(in, errors, [&](std::size_t, const std::string& line) { out.push_back(packet_from_line(line)); });
    return out;
}

inline void write_trace(std::ostream& out, const std::vector<Packet>& packets) {
    for (const auto& p : packets) out << packet_to_line(p) << '\n';
}

}  // namespace honeynet
