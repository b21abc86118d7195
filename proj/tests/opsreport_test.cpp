#include <gtest/gtest.h>

#include <random>

#include "bundled_data.hpp"
#include "honeynet/opsreport.hpp"
#include "report_oracle.hpp"
#include "test_support.hpp"

namespace honeynet {
namespace {

using testing::brute_force_occurrences;
using testing::make_tcp;

const Ipv4 kHoneypot{10, 1, 0, 5};

void expect_matches_oracle(const Report& r, const testing::OracleReport& o) {
    EXPECT_EQ(r.total_bytes, o.total_bytes);
    EXPECT_EQ(r.total_packets, o.total_packets);
    EXPECT_EQ(r.unique_source_ips, o.unique_source_ips);
    EXPECT_EQ(r.per_sid_counts, o.per_sid_counts);
    EXPECT_EQ(r.per_service_attempts, o.per_service_attempts);
    EXPECT_EQ(r.time_to_first_contact.has_value(), o.first_contact_us.has_value());
    if (r.time_to_first_contact && o.first_contact_us) {
        EXPECT_EQ(r.time_to_first_contact->count(), *o.first_contact_us);
    }
    EXPECT_EQ(r.quota_drops, o.quota_drops);
    EXPECT_EQ(r.tokens_exfiltrated, o.tokens_exfiltrated);
    EXPECT_EQ(r.corrupt_lines, o.corrupt_lines);
}

/// 100 inbound packets from 9 sources; 10 of them carry "cmd.exe" to port 80.
StoreSet synthetic_stores() {
    StoreSet stores;
    Honeywall gw(reference_config(), testing::bundled_rules(), QuotaPolicy{}, stores);
    std::mt19937_64 rng(9);
    SimTime t = std::chrono::seconds(600);
    for (int i = 0; i < 100; ++i) {
        Ipv4 src(198, 51, 100, static_cast<std::uint8_t>(1 + i % 9));
        bool probe = i % 10 == 3;
        std::uint16_t port = probe ? 80 : std::array<std::uint16_t, 3>{21, 22, 80}[rng() % 3];
        Bytes payload = probe ? to_bytes("GET /scripts/..%255c../winnt/system32/cmd.exe?/c+dir") : Bytes{};
        gw.handle(make_tcp(src, static_cast<std::uint16_t>(2000 + i), kHoneypot, port, probe ? kPshAck : kSyn,
                           payload, t));
        t += SimTime(1000 + static_cast<std::int64_t>(rng() % 5000));
    }
    return stores;
}

void write_with_config(const std::filesystem::path& dir, const StoreSet& s, const Config& cfg) {
    write_store_dir(dir, s);
    std::ofstream(dir / store_files::kConfig) << config_to_json(cfg).dump(2);
}

TEST(Config, BundledConfigLoads) {
    Config c = testing::bundled_config();
    EXPECT_EQ(c.net, reference_config());
    EXPECT_EQ(c.tokens.size(), 3u);
    EXPECT_EQ(c.quota, QuotaPolicy{});
    EXPECT_NO_THROW(check_alert_sids(c, testing::bundled_rules()));
    EXPECT_THROW(check_alert_sids(c, RuleSet{}), ConfigError);
}

TEST(Config, JsonRoundTrip) {
    Config c = testing::bundled_config();
    EXPECT_EQ(config_from_json(Json::parse(config_to_json(c).dump())), c);
}

TEST(Config, RejectsInconsistentDocuments) {
    auto base = config_to_json(testing::bundled_config());
    auto rejects = [](Json j) { EXPECT_THROW(config_from_json(j), ConfigError) << j.dump(); };

    Json j = base;
    j["alerts"].push_back(Json{{"type", "TOKEN_SEEN"}, {"token", "nope"}});
    rejects(j);
    j = base;
    j["alerts"].push_back(Json{{"type", "INBOUND_CONTACT"}, {"host", "10.1.0.9"}});
    rejects(j);
    j = base;
    j["tokens"][1]["marker_hex"] = j["tokens"][0]["marker_hex"];
    rejects(j);
    j = base;
    j["tokens"][0]["marker_hex"] = "abcd";
    rejects(j);
    j = base;
    j["alerts"][0]["type"] = "SOMETHING";
    rejects(j);
    j = base;
    j["quota"]["limits"]["TCP"] = 0;
    rejects(j);
    j = base;
    j["network"]["collector_ip"] = "10.1.0.2";
    rejects(j);
    j = base;
    j["tokens"][0]["host"] = "10.1.0.7";
    rejects(j);
}

TEST(Tokens, NoHitsWithoutExfiltration) {
    EventLog log = run_scenario(testing::bundled_scenario("first_contact"), reference_config(), {}, {});
    EXPECT_TRUE(scan_for_tokens(log.stores, testing::bundled_config().all_tokens(), reference_config()).empty());
}

TEST(Tokens, ReadAndSendGiveTwoHitsMatchingGrep) {
    Config cfg = testing::bundled_config();
    EventLog log = run_scenario(testing::bundled_scenario("compromise_pivot"), cfg.net, testing::bundled_rules(), cfg.quota);
    auto hits = scan_for_tokens(log.stores, cfg.all_tokens(), cfg.net);

    // Oracle: grep every marker over non-capture packets and over record data.
    std::size_t expected = 0;
    std::optional<SimTime> packet_time;
    for (const auto& pt : cfg.tokens) {
        Bytes marker(pt.token.marker.begin(), pt.token.marker.end());
        for (const auto& p : log.stores.packets) {
            if (p.protocol == Protocol::Udp && p.dst_port == cfg.net.capture_port) continue;
            auto n = brute_force_occurrences(p.payload, marker).size();
            expected += n;
            if (n) packet_time = p.timestamp;
        }
        for (const auto& r : log.stores.capture.records) expected += brute_force_occurrences(r.record.data, marker).size();
    }
    ASSERT_EQ(hits.size(), expected);
    ASSERT_EQ(hits.size(), 2u);
    EXPECT_EQ(hits[0].where, HitSource::Capture);
    EXPECT_EQ(hits[1].where, HitSource::Packet);
    EXPECT_EQ(hits[1].token_id, "mail-inbox");
    EXPECT_EQ(hits[1].time, *packet_time);
    EXPECT_LT(hits[0].time, hits[1].time);
}

TEST(Alerts, EmptyStreamGivesNothing) {
    EXPECT_TRUE(evaluate_alerts({}, {}, testing::bundled_config().alerts).empty());
}

TEST(Alerts, FirstInboundConnectFiresOnce) {
    StoreSet stores;
    Honeywall gw(reference_config(), {}, {}, stores);
    for (int i = 0; i < 5; ++i)
        gw.handle(make_tcp(Ipv4(198, 51, 100, 7), static_cast<std::uint16_t>(3000 + i), kHoneypot, 80, kSyn, {},
                           SimTime(i)));
    AlertRule rule;
    rule.type = AlertType::InboundContact;
    rule.host = kHoneypot;
    auto alerts = evaluate_alerts(stores.events, {}, {rule});
    ASSERT_EQ(alerts.size(), 1u);
    EXPECT_EQ(alerts[0].time, SimTime(0));
    EXPECT_EQ(alerts[0].seq, 0u);
}

TEST(Alerts, SixteenthInitiationRaisesQuotaAlert) {
    StoreSet stores;
    Honeywall gw(reference_config(), {}, {}, stores);
    for (int i = 0; i < 16; ++i)
        gw.handle(make_tcp(kHoneypot, static_cast<std::uint16_t>(4000 + i), Ipv4(203, 0, 113, 9), 80, kSyn, {},
                           SimTime(i)));
    AlertRule rule;
    rule.type = AlertType::QuotaExceeded;
    rule.host = kHoneypot;
    auto alerts = evaluate_alerts(stores.events, {}, {rule});
    ASSERT_EQ(alerts.size(), 1u);
    EXPECT_EQ(alerts[0].seq, 15u);
}

TEST(Alerts, EveryQuotaDropHasExactlyOneAlert) {
    Config cfg = testing::bundled_config();
    EventLog log = run_scenario(testing::bundled_scenario("quota_storm"), cfg.net, testing::bundled_rules(), cfg.quota);
    std::map<std::uint64_t, int> alerts_per_seq;
    for (const auto& a : evaluate_alerts(log.stores.events, {}, cfg.alerts))
        if (a.type == AlertType::QuotaExceeded) ++alerts_per_seq[*a.seq];
    std::size_t drops = 0;
    for (const auto& e : log.stores.events)
        if (e.kind() == EventKind::QuotaDropped) {
            ++drops;
            EXPECT_EQ(alerts_per_seq[e.seq], 1);
        }
    EXPECT_GT(drops, 0u);
    EXPECT_EQ(alerts_per_seq.size(), drops);
}

TEST(Alerts, SignatureAlertsPerMatchingEvent) {
    StoreSet s = synthetic_stores();
    AlertRule rule;
    rule.sid = 1002;
    EXPECT_EQ(evaluate_alerts(s.events, {}, {rule}).size(), 10u);
}

TEST(Report, SyntheticStoreMatchesKnownTruthAndOracle) {
    auto dir = testing::scratch_dir("report-synthetic");
    write_with_config(dir, synthetic_stores(), Config{});
    Report r = compute_report(dir);
    EXPECT_EQ(r.unique_source_ips, 9u);
    EXPECT_EQ(r.per_sid_counts.at(1002), 10u);
    EXPECT_EQ(r.total_packets, 100u);
    EXPECT_EQ(r.time_to_first_contact, std::chrono::seconds(600));
    expect_matches_oracle(r, testing::oracle_report(dir));
    std::filesystem::remove_all(dir);
}

TEST(Report, EmptyStoresGiveZeroReport) {
    auto dir = testing::scratch_dir("report-empty");
    Report r = compute_report(dir);
    EXPECT_EQ(r, Report{});
    EXPECT_FALSE(r.time_to_first_contact);
    std::filesystem::remove_all(dir);
}

TEST(Report, RepeatedSourceCountsOnce) {
    StoreSet s;
    for (int i = 0; i < 1000; ++i)
        s.packets.push_back(make_tcp(Ipv4(198, 51, 100, 7), 5000, kHoneypot, 80, kAck, {}, SimTime(i)));
    Report r = compute_report(s, reference_config(), {});
    EXPECT_EQ(r.unique_source_ips, 1u);
    EXPECT_EQ(r.per_service_attempts.at(80), 1u);
}

TEST(Report, CorruptLinesCountedNotFatal) {
    auto dir = testing::scratch_dir("report-corrupt");
    write_with_config(dir, synthetic_stores(), Config{});
    {
        std::ofstream out(dir / store_files::kPackets, std::ios::app);
        out << "{\"src_ip\": \"1.2.3.4\", trunc\n" << "garbage\n";
        std::ofstream ev(dir / store_files::kEvents, std::ios::app);
        ev << "]]\n";
    }
    Report r = compute_report(dir);
    EXPECT_EQ(r.corrupt_lines, 3u);
    EXPECT_EQ(r.total_packets, 100u);
    expect_matches_oracle(r, testing::oracle_report(dir));
    std::filesystem::remove_all(dir);
}

TEST(Report, BundledScenariosMatchOracle) {
    Config cfg = testing::bundled_config();
    for (const auto& name : testing::bundled_scenario_names()) {
        SCOPED_TRACE(name);
        auto dir = testing::scratch_dir("report-" + name);
        EventLog log = run_scenario(testing::bundled_scenario(name), cfg.net, testing::bundled_rules(), cfg.quota);
        write_event_log(dir, log);
        write_with_config(dir, log.stores, cfg);
        expect_matches_oracle(compute_report(dir), testing::oracle_report(dir));
        std::filesystem::remove_all(dir);
    }
}

TEST(Report, RewrittenEventsAgreeWithForwardedBytes) {
    Config cfg = testing::bundled_config();
    RuleSet rules = testing::bundled_rules();
    EventLog log = run_scenario(testing::bundled_scenario("compromise_pivot"), cfg.net, rules, cfg.quota);
    // Forwarded packets appear in the same order as FORWARDED events.
    std::map<std::uint64_t, const Packet*> forwarded_by_seq;
    std::size_t k = 0;
    for (const auto& e : log.stores.events)
        if (e.kind() == EventKind::Forwarded) forwarded_by_seq[e.seq] = &log.stores.forwarded.at(k++);
    std::size_t rewritten = 0;
    for (const auto& e : log.stores.events) {
        auto* rw = std::get_if<event::Rewritten>(&e.detail);
        if (!rw) continue;
        ++rewritten;
        const Bytes& replace = *rules.find(rw->sid)->replace;
        const Packet& p = *forwarded_by_seq.at(e.seq);
        for (auto off : rw->offsets)
            EXPECT_TRUE(std::equal(replace.begin(), replace.end(), p.payload.begin() + static_cast<std::ptrdiff_t>(off)));
    }
    EXPECT_EQ(compute_report(log.stores, cfg.net, {}).per_sid_counts.at(651), rewritten);
}

TEST(Report, TableAndJsonCarryEveryField) {
    Report r = compute_report(synthetic_stores(), reference_config(), {});
    std::string table = report_table(r);
    for (const char* label : {"total packets", "total bytes", "unique source IPs", "first contact", "quota drops",
                              "tokens exfiltrated", "sid 1002", "port 80"})
        EXPECT_NE(table.find(label), std::string::npos) << label;
    Json j = report_to_json(r);
    EXPECT_EQ(j["unique_source_ips"], 9);
    EXPECT_EQ(j["per_sid_counts"]["1002"], 10);
    EXPECT_EQ(j["time_to_first_contact_us"], 600'000'000);
}

}  // namespace
}  // namespace honeynet
