#pragma once

/// @file stores.hpp
/// @brief The redundant append-only stores and the gateway pipeline that
/// fills them.
///
/// A store directory holds one JSON Lines file per store:
///   packets.jsonl      every packet presented to the gateway, in arrival order
///   forwarded.jsonl    every packet the gateway forwarded, after rewriting
///   events.jsonl       gateway events
///   capture.jsonl      decoded capture records
///   capture_raw.jsonl  capture payloads that did not decode

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "honeynet/capture.hpp"
#include "honeynet/honeywall.hpp"
#include "honeynet/trace.hpp"

namespace honeynet {

namespace store_files {
inline constexpr const char* kPackets = "packets.jsonl";
inline constexpr const char* kForwarded = "forwarded.jsonl";
inline constexpr const char* kEvents = "events.jsonl";
inline constexpr const char* kCapture = "capture.jsonl";
inline constexpr const char* kCaptureRaw = "capture_raw.jsonl";
inline constexpr const char* kHostLog = "hostlog.jsonl";
inline constexpr const char* kAlerts = "alerts.jsonl";
inline constexpr const char* kConfig = "config.json";
}  // namespace store_files

struct StoreSet {
    std::vector<Packet> packets;
    std::vector<Packet> forwarded;
    std::vector<GatewayEvent> events;
    CaptureStore capture;

    bool operator==(const StoreSet&) const = default;
};

/// Gateway plus collector, wired to a StoreSet.
class Honeywall {
public:
    struct Handled {
        Decision decision;
        std::uint64_t seq = 0;
    };

    Honeywall(NetConfig cfg, RuleSet rules, QuotaPolicy policy, StoreSet& stores)
        : cfg_(std::move(cfg)), rules_(std::move(rules)), policy_(std::move(policy)),
          state_(reset_state(cfg_, policy_)), stores_(&stores) {}

    Handled handle(const Packet& p) {
        StoreTap tap{stores_};
        ProcessResult r = process(p, state_, rules_, cfg_, policy_, tap);
        const std::uint64_t seq = state_.next_seq - 1;
        for (auto& e : r.events) stores_->events.push_back(std::move(e));
        switch (r.decision.verdict) {
            case Verdict::Forward: stores_->forwarded.push_back(r.decision.packet); break;
            case Verdict::DivertToCollector: {
                IngestResult ingest = collector_ingest(r.decision.packet, stores_->capture);
                if (ingest.outcome == IngestOutcome::StoredRaw)
                    stores_->events.push_back(GatewayEvent{p.timestamp, seq,
                                                           event::Alert{std::string(kReasonUndecodableCapture), std::nullopt},
                                                           flow_key(p), Direction::CaptureChannel, p.payload.size()});
                break;
            }
            case Verdict::Drop: break;
        }
        return {std::move(r.decision), seq};
    }

    const GatewayState& state() const { return state_; }
    const NetConfig& config() const { return cfg_; }

private:
    struct StoreTap {
        StoreSet* stores;
        void record(const Packet& p) { stores->packets.push_back(p); }
    };

    NetConfig cfg_;
    RuleSet rules_;
    QuotaPolicy policy_;
    GatewayState state_;
    StoreSet* stores_;
};

// --- directory IO ------------------------------------------------------------

inline void write_jsonl_file(const std::filesystem::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    for (const auto& l : lines) out << l << '\n';
}

template <typename T, typename F>
std::vector<std::string> to_lines(const std::vector<T>& items, F&& to_json) {
    std::vector<std::string> lines;
    lines.reserve(items.size());
    for (const auto& x : items) lines.push_back(to_json(x).dump());
    return lines;
}

inline void write_store_dir(const std::filesystem::path& dir, const StoreSet& s) {
    std::filesystem::create_directories(dir);
    write_jsonl_file(dir / store_files::kPackets, to_lines(s.packets, packet_to_json));
    write_jsonl_file(dir / store_files::kForwarded, to_lines(s.forwarded, packet_to_json));
    write_jsonl_file(dir / store_files::kEvents, to_lines(s.events, event_to_json));
    write_jsonl_file(dir / store_files::kCapture, to_lines(s.capture.records, stored_record_to_json));
    write_jsonl_file(dir / store_files::kCaptureRaw, to_lines(s.capture.raw, raw_capture_to_json));
}

struct LoadedStores {
    StoreSet stores;
    /// Unreadable lines per file name; a missing file counts as empty.
    std::map<std::string, LineErrors> errors;

    std::size_t corrupt_lines() const {
        std::size_t n = 0;
        for (const auto& [file, e] : errors) n += e.count;
        return n;
    }
};

template <typename T, typename F>
void read_jsonl_into(const std::filesystem::path& path, std::vector<T>& out, LineErrors& errors, F&& from_json) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return;
    for_each_jsonl(in, errors, [&](std::size_t, const std::string& line) { out.push_back(from_json(Json::parse(line))); });
}

inline LoadedStores read_store_dir(const std::filesystem::path& dir) {
    LoadedStores l;
    auto& s = l.stores;
    read_jsonl_into(dir / store_files::kPackets, s.packets, l.errors[store_files::kPackets], packet_from_json);
    read_jsonl_into(dir / store_files::kForwarded, s.forwarded, l.errors[store_files::kForwarded], packet_from_json);
    read_jsonl_into(dir / store_files::kEvents, s.events, l.errors[store_files::kEvents], event_from_json);
    read_jsonl_into(dir / store_files::kCapture, s.capture.records, l.errors[store_files::kCapture],
                    stored_record_from_json);
    read_jsonl_into(dir / store_files::kCaptureRaw, s.capture.raw, l.errors[store_files::kCaptureRaw],
                    raw_capture_from_json);
    return l;
}

}  // namespace honeynet
