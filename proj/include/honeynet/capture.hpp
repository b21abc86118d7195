#pragma once

/// @file capture.hpp
/// @brief Covert activity channel: record codec, honeypot-side sensor and
/// the collector store.
///
/// Wire layout of one record, all integers big-endian:
///
///   offset size field
///        0    4 magic      0xD0D0D0D0
///        4    2 version    1
///        6    2 rec_type   0 = input (keystrokes), 1 = output
///        8    4 counter    per-host sequence number
///       12    4 time_sec
///       16    4 time_usec
///       20    4 pid
///       24    4 uid
///       28    4 fd
///       32   12 command    NUL padded
///       44    4 data_len
///       48    n data

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "honeynet/netmodel.hpp"
#include "honeynet/trace.hpp"

namespace honeynet {

inline constexpr std::uint32_t kCaptureMagic = 0xD0D0D0D0;
inline constexpr std::uint16_t kCaptureVersion = 1;
inline constexpr std::size_t kCaptureHeaderSize = 48;
inline constexpr std::size_t kCommandSize = 12;
/// Largest data field that still fits one capture packet.
inline constexpr std::size_t kMaxCaptureData = kMaxPayload - kCaptureHeaderSize;

enum class RecordType : std::uint16_t { Input = 0, Output = 1 };

using CommandName = std::array<std::uint8_t, kCommandSize>;

/// NUL-padded command field; longer names are truncated to 12 bytes.
inline CommandName make_command(std::string_view name) {
    CommandName c{};
    std::copy_n(name.begin(), std::min(name.size(), kCommandSize), c.begin());
    return c;
}

struct CaptureRecord {
    std::uint32_t magic = kCaptureMagic;
    std::uint16_t version = kCaptureVersion;
    RecordType rec_type = RecordType::Input;
    std::uint32_t counter = 0;
    std::uint32_t time_sec = 0;
    std::uint32_t time_usec = 0;
    std::uint32_t pid = 0;
    std::uint32_t uid = 0;
    std::uint32_t fd = 0;
    CommandName command{};
    std::uint32_t data_len = 0;
    Bytes data;

    std::string command_text() const {
        auto end = std::find(command.begin(), command.end(), std::uint8_t{0});
        return std::string(command.begin(), end);
    }

    bool operator==(const CaptureRecord&) const = default;
};

class DecodeError : public std::runtime_error {
public:
    enum class Reason { ShortBuffer, BadMagic, BadVersion, BadType, LengthMismatch };

    explicit DecodeError(Reason r) : std::runtime_error(describe(r)), reason_(r) {}
    Reason reason() const { return reason_; }

    static const char* describe(Reason r) {
        switch (r) {
            case Reason::ShortBuffer: return "short buffer";
            case Reason::BadMagic: return "bad magic";
            case Reason::BadVersion: return "unsupported version";
            case Reason::BadType: return "unknown record type";
            case Reason::LengthMismatch: return "data length mismatch";
        }
        return "decode error";
    }

private:
    Reason reason_;
};

namespace detail {
inline void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}
inline void put_u32(Bytes& out, std::uint32_t v) {
    put_u16(out, static_cast<std::uint16_t>(v >> 16));
    put_u16(out, static_cast<std::uint16_t>(v));
}
inline std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>((b[at] << 8) | b[at + 1]);
}
inline std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return (std::uint32_t{get_u16(b, at)} << 16) | get_u16(b, at + 2);
}
}  // namespace detail

/// Throws std::invalid_argument if data_len disagrees with data or the
/// constant fields are wrong.
inline Bytes encode_record(const CaptureRecord& r) {
    if (r.data_len != r.data.size())
        throw std::invalid_argument("data_len " + std::to_string(r.data_len) + " does not match " +
                                    std::to_string(r.data.size()) + " data bytes");
    if (r.magic != kCaptureMagic) throw std::invalid_argument("record magic must be 0xD0D0D0D0");
    if (r.version != kCaptureVersion) throw std::invalid_argument("record version must be 1");
    Bytes out;
    out.reserve(kCaptureHeaderSize + r.data.size());
    detail::put_u32(out, r.magic);
    detail::put_u16(out, r.version);
    detail::put_u16(out, static_cast<std::uint16_t>(r.rec_type));
    detail::put_u32(out, r.counter);
    detail::put_u32(out, r.time_sec);
    detail::put_u32(out, r.time_usec);
    detail::put_u32(out, r.pid);
    detail::put_u32(out, r.uid);
    detail::put_u32(out, r.fd);
    out.insert(out.end(), r.command.begin(), r.command.end());
    detail::put_u32(out, r.data_len);
    out.insert(out.end(), r.data.begin(), r.data.end());
    return out;
}

inline CaptureRecord decode_record(std::span<const std::uint8_t> b) {
    using R = DecodeError::Reason;
    if (b.size() < kCaptureHeaderSize) throw DecodeError(R::ShortBuffer);
    CaptureRecord r;
    r.magic = detail::get_u32(b, 0);
    if (r.magic != kCaptureMagic) throw DecodeError(R::BadMagic);
    r.version = detail::get_u16(b, 4);
    if (r.version != kCaptureVersion) throw DecodeError(R::BadVersion);
    std::uint16_t type = detail::get_u16(b, 6);
    if (type > 1) throw DecodeError(R::BadType);
    r.rec_type = static_cast<RecordType>(type);
    r.counter = detail::get_u32(b, 8);
    r.time_sec = detail::get_u32(b, 12);
    r.time_usec = detail::get_u32(b, 16);
    r.pid = detail::get_u32(b, 20);
    r.uid = detail::get_u32(b, 24);
    r.fd = detail::get_u32(b, 28);
    std::copy_n(b.begin() + 32, kCommandSize, r.command.begin());
    r.data_len = detail::get_u32(b, 44);
    if (b.size() - kCaptureHeaderSize != r.data_len) throw DecodeError(R::LengthMismatch);
    r.data.assign(b.begin() + kCaptureHeaderSize, b.end());
    return r;
}

// --- honeypot side -----------------------------------------------------------

/// Per-host sensor state: where records go and the next counter value.
class CaptureSensor {
public:
    CaptureSensor(Ipv4 host, const NetConfig& cfg, std::uint32_t first_counter = 0)
        : host_(host), collector_(cfg.collector_ip), port_(cfg.capture_port), next_counter_(first_counter) {}

    Ipv4 host() const { return host_; }
    std::uint32_t next_counter() const { return next_counter_; }

    /// Builds the capture packet for one activity record and advances the
    /// counter. Throws std::length_error for data that cannot fit a packet.
    Packet emit(RecordType type, std::uint32_t pid, std::uint32_t uid, std::uint32_t fd, std::string_view command,
                std::span<const std::uint8_t> data, SimTime clock) {
        if (data.size() > kMaxCaptureData)
            throw std::length_error("capture data of " + std::to_string(data.size()) + " bytes exceeds " +
                                    std::to_string(kMaxCaptureData));
        CaptureRecord r;
        r.rec_type = type;
        r.counter = next_counter_;
        r.time_sec = static_cast<std::uint32_t>(clock.count() / 1'000'000);
        r.time_usec = static_cast<std::uint32_t>(clock.count() % 1'000'000);
        r.pid = pid;
        r.uid = uid;
        r.fd = fd;
        r.command = make_command(command);
        r.data.assign(data.begin(), data.end());
        r.data_len = static_cast<std::uint32_t>(data.size());

        Packet p;
        p.src_mac = MacAddr::for_host(host_);
        p.dst_mac = MacAddr::for_host(collector_);
        p.src_ip = host_;
        p.dst_ip = collector_;
        p.protocol = Protocol::Udp;
        p.src_port = port_;
        p.dst_port = port_;
        p.payload = encode_record(r);
        p.timestamp = clock;
        ++next_counter_;
        return recompute_checksums(std::move(p));
    }

private:
    Ipv4 host_;
    Ipv4 collector_;
    std::uint16_t port_;
    std::uint32_t next_counter_;
};

// --- collector side ----------------------------------------------------------

struct StoredRecord {
    Ipv4 host;
    SimTime time{0};
    CaptureRecord record;
    bool duplicate_counter = false;
    bool operator==(const StoredRecord&) const = default;
};

struct RawCapture {
    Ipv4 host;
    SimTime time{0};
    std::string reason;
    Bytes payload;
    bool operator==(const RawCapture&) const = default;
};

struct CaptureStore {
    std::vector<StoredRecord> records;
    std::vector<RawCapture> raw;

    bool operator==(const CaptureStore&) const = default;
};

enum class IngestOutcome { Stored, StoredDuplicate, StoredRaw };

struct IngestResult {
    IngestOutcome outcome = IngestOutcome::Stored;
    std::string reason;  // decode failure, for StoredRaw
};

/// Appends the decoded record, or the raw payload when it does not decode.
/// Nothing is ever discarded.
inline IngestResult collector_ingest(const Packet& p, CaptureStore& store) {
    CaptureRecord r;
    try {
        r = decode_record(p.payload);
    } catch (const DecodeError& e) {
        store.raw.push_back(RawCapture{p.src_ip, p.timestamp, e.what(), p.payload});
        return {IngestOutcome::StoredRaw, e.what()};
    }
    bool dup = std::any_of(store.records.begin(), store.records.end(), [&](const StoredRecord& s) {
        return s.host == p.src_ip && s.record.counter == r.counter;
    });
    store.records.push_back(StoredRecord{p.src_ip, p.timestamp, std::move(r), dup});
    return {dup ? IngestOutcome::StoredDuplicate : IngestOutcome::Stored, {}};
}

struct Session {
    Ipv4 host;
    std::vector<CaptureRecord> records;
    Bytes transcript;
};

/// Records of one host ordered by counter, first copy of a counter kept,
/// transcript = concatenated input data.
inline Session reassemble_session(const CaptureStore& store, Ipv4 host) {
    Session s;
    s.host = host;
    for (const auto& sr : store.records)
        if (sr.host == host) s.records.push_back(sr.record);
    std::stable_sort(s.records.begin(), s.records.end(),
                     [](const CaptureRecord& a, const CaptureRecord& b) { return a.counter < b.counter; });
    s.records.erase(std::unique(s.records.begin(), s.records.end(),
                                [](const CaptureRecord& a, const CaptureRecord& b) { return a.counter == b.counter; }),
                    s.records.end());
    for (const auto& r : s.records)
        if (r.rec_type == RecordType::Input) s.transcript.insert(s.transcript.end(), r.data.begin(), r.data.end());
    return s;
}

// --- store lines -------------------------------------------------------------

inline Json stored_record_to_json(const StoredRecord& s) {
    const auto& r = s.record;
    return Json{{"host_ip", s.host.str()},
                {"time", s.time.count()},
                {"magic", r.magic},
                {"version", r.version},
                {"rec_type", static_cast<std::uint16_t>(r.rec_type)},
                {"counter", r.counter},
                {"time_sec", r.time_sec},
                {"time_usec", r.time_usec},
                {"pid", r.pid},
                {"uid", r.uid},
                {"fd", r.fd},
                {"command", hex_encode(r.command)},
                {"data_len", r.data_len},
                {"data", hex_encode(r.data)},
                {"duplicate_counter", s.duplicate_counter}};
}

inline StoredRecord stored_record_from_json(const Json& j) {
    StoredRecord s;
    s.host = Ipv4::parse(j.at("host_ip").get<std::string>());
    s.time = SimTime(j.at("time").get<std::int64_t>());
    auto& r = s.record;
    r.magic = j.at("magic").get<std::uint32_t>();
    r.version = j.at("version").get<std::uint16_t>();
    auto type = j.at("rec_type").get<std::uint16_t>();
    if (type > 1) throw ConfigError("unknown rec_type " + std::to_string(type));
    r.rec_type = static_cast<RecordType>(type);
    r.counter = j.at("counter").get<std::uint32_t>();
    r.time_sec = j.at("time_sec").get<std::uint32_t>();
    r.time_usec = j.at("time_usec").get<std::uint32_t>();
    r.pid = j.at("pid").get<std::uint32_t>();
    r.uid = j.at("uid").get<std::uint32_t>();
    r.fd = j.at("fd").get<std::uint32_t>();
    Bytes cmd = hex_decode(j.at("command").get<std::string>());
    if (cmd.size() != kCommandSize) throw ConfigError("command field must be 12 bytes");
    std::copy(cmd.begin(), cmd.end(), r.command.begin());
    r.data_len = j.at("data_len").get<std::uint32_t>();
    r.data = hex_decode(j.at("data").get<std::string>());
    if (r.data.size() != r.data_len) throw ConfigError("data_len does not match data");
    s.duplicate_counter = j.at("duplicate_counter").get<bool>();
    return s;
}

inline Json raw_capture_to_json(const RawCapture& r) {
    return Json{{"host_ip", r.host.str()}, {"time", r.time.count()}, {"reason", r.reason}, {"payload", hex_encode(r.payload)}};
}

inline RawCapture raw_capture_from_json(const Json& j) {
    return RawCapture{Ipv4::parse(j.at("host_ip").get<std::string>()), SimTime(j.at("time").get<std::int64_t>()),
                      j.at("reason").get<std::string>(), hex_decode(j.at("payload").get<std::string>())};
}

}  // namespace honeynet
