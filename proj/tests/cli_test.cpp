#include <gtest/gtest.h>

#include <sstream>

#include "bundled_data.hpp"
#include "honeynet/cli.hpp"
#include "test_support.hpp"

namespace honeynet {
namespace {

struct CliResult {
    int status;
    std::string out;
    std::string err;
};

CliResult cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    int status = run_cli(args, out, err);
    return {status, out.str(), err.str()};
}

std::string data(const std::string& rel) { return testing::data_path(rel).string(); }

TEST(CheckRules, CanonicalEchoOfShellcodeRule) {
    auto r = cli({"check-rules", data("rules/shellcode_noop.rules")});
    EXPECT_EQ(r.status, 0);
    EXPECT_EQ(r.out,
              "alert ip $HONEYNET any -> $EXTERNAL_NET any (msg:\"SHELLCODE x86 stealth NOOP\"; rev:6; sid:651; "
              "content:\"|EB 02 EB 02 EB 02|\"; replace:\"|24 00 99 DE 6C 3E|\";)\n");
    // The canonical form is itself accepted and reproduces itself.
    auto dir = testing::scratch_dir("cli-canonical");
    std::ofstream(dir / "c.rules") << r.out;
    EXPECT_EQ(cli({"check-rules", (dir / "c.rules").string()}).out, r.out);
    std::filesystem::remove_all(dir);
}

TEST(CheckRules, ParseErrorIsDataError) {
    auto dir = testing::scratch_dir("cli-badrules");
    std::ofstream(dir / "bad.rules") << "alert tcp $HONEYNET any -> $EXTERNAL_NET any (content:\"|EB 0G|\"; sid:1;)\n";
    auto r = cli({"check-rules", (dir / "bad.rules").string()});
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("bad.rules:1:"), std::string::npos) << r.err;
    EXPECT_TRUE(r.out.empty());
    std::filesystem::remove_all(dir);
}

TEST(Usage, ErrorsExitTwo) {
    EXPECT_EQ(cli({}).status, 2);
    EXPECT_EQ(cli({"frobnicate"}).status, 2);
    EXPECT_EQ(cli({"check-rules"}).status, 2);
    EXPECT_EQ(cli({"run", data("scenarios/first_contact.json"), "--rules", data("rules/honeywall.rules")}).status, 2);
    EXPECT_EQ(cli({"report", "a", "b"}).status, 2);
}

TEST(Usage, HelpExitsZero) {
    auto r = cli({"--help"});
    EXPECT_EQ(r.status, 0);
    EXPECT_NE(r.out.find("check-rules"), std::string::npos);
}

TEST(DataErrors, MissingFilesExitOne) {
    EXPECT_EQ(cli({"check-rules", "/nonexistent/x.rules"}).status, 1);
    EXPECT_EQ(cli({"report", "/nonexistent/dir"}).status, 1);
    EXPECT_EQ(cli({"tokens", "/nonexistent/dir"}).status, 1);
    auto dir = testing::scratch_dir("cli-missing");
    EXPECT_EQ(cli({"run", "/nonexistent.json", "--rules", data("rules/honeywall.rules"), "--config",
                   data("config/reference.json"), "--out", dir.string()})
                  .status,
              1);
    std::filesystem::remove_all(dir);
}

TEST(DataErrors, InvalidScenarioWritesNothing) {
    auto dir = testing::scratch_dir("cli-invalid");
    std::ofstream(dir / "sc.json") << R"({"seed": 1, "duration_us": 10, "hosts": [],
        "steps": [{"at_us": 5, "host": "1.2.3.4", "action": "CONNECT", "target": "10.1.0.5", "port": 80}]})";
    auto r = cli({"run", (dir / "sc.json").string(), "--rules", data("rules/honeywall.rules"), "--config",
                  data("config/reference.json"), "--out", (dir / "out").string()});
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("unknown host"), std::string::npos) << r.err;
    EXPECT_FALSE(std::filesystem::exists(dir / "out"));
    std::filesystem::remove_all(dir);
}

TEST(Run, TwiceGivesIdenticalDirectories) {
    auto a = testing::scratch_dir("cli-run-a");
    auto b = testing::scratch_dir("cli-run-b");
    for (const auto& out : {a, b}) {
        auto r = cli({"run", data("scenarios/compromise_pivot.json"), "--rules", data("rules/honeywall.rules"),
                      "--config", data("config/reference.json"), "--out", out.string()});
        ASSERT_EQ(r.status, 0) << r.err;
    }
    auto sa = testing::directory_snapshot(a);
    EXPECT_EQ(sa, testing::directory_snapshot(b));
    for (const char* f : {"packets.jsonl", "forwarded.jsonl", "events.jsonl", "capture.jsonl", "capture_raw.jsonl",
                          "hostlog.jsonl", "alerts.jsonl", "config.json"})
        EXPECT_TRUE(sa.contains(f)) << f;
    std::filesystem::remove_all(a);
    std::filesystem::remove_all(b);
}

TEST(Report, EmptyDirectoryIsZeroReport) {
    auto dir = testing::scratch_dir("cli-report-empty");
    auto r = cli({"report", dir.string()});
    EXPECT_EQ(r.status, 0);
    EXPECT_NE(r.out.find("total packets"), std::string::npos);
    std::string body = r.out.substr(0, r.out.size() - 1);
    auto last_line = body.substr(body.rfind('\n') + 1);
    Json j = Json::parse(last_line);
    EXPECT_EQ(j["total_packets"], 0);
    EXPECT_TRUE(j["time_to_first_contact_us"].is_null());
    std::filesystem::remove_all(dir);
}

TEST(Tokens, ListsExfiltrationHits) {
    auto dir = testing::scratch_dir("cli-tokens");
    ASSERT_EQ(cli({"run", data("scenarios/compromise_pivot.json"), "--rules", data("rules/honeywall.rules"),
                   "--config", data("config/reference.json"), "--out", dir.string()})
                  .status,
              0);
    auto r = cli({"tokens", dir.string()});
    EXPECT_EQ(r.status, 0);
    std::istringstream lines(r.out);
    std::vector<Json> hits;
    for (std::string line; std::getline(lines, line);) hits.push_back(Json::parse(line));
    ASSERT_EQ(hits.size(), 2u);
    EXPECT_EQ(hits[0]["where"], "CAPTURE");
    EXPECT_EQ(hits[1]["where"], "PACKET");
    EXPECT_EQ(hits[1]["token"], "mail-inbox");
    std::filesystem::remove_all(dir);
}

TEST(Replay, TraceThroughGatewayWithoutHosts) {
    auto dir = testing::scratch_dir("cli-replay");
    Bytes sled = {0x90, 0xEB, 0x02, 0xEB, 0x02, 0xEB, 0x02, 0x90};
    std::vector<Packet> trace = {
        testing::make_tcp(Ipv4(198, 51, 100, 7), 1234, Ipv4(10, 1, 0, 5), 80, kSyn, {}, SimTime(1)),
        testing::make_tcp(Ipv4(10, 1, 0, 5), 4000, Ipv4(203, 0, 113, 9), 80, kPshAck, sled, SimTime(2)),
    };
    {
        std::ofstream out(dir / "trace.jsonl");
        write_trace(out, trace);
        out << "not json\n";
    }
    auto r = cli({"replay", (dir / "trace.jsonl").string(), "--rules", data("rules/honeywall.rules")});
    EXPECT_EQ(r.status, 0) << r.err;
    EXPECT_NE(r.err.find("skipped line 3"), std::string::npos) << r.err;
    EXPECT_NE(r.out.find("\"kind\":\"REWRITTEN\""), std::string::npos);

    r = cli({"replay", (dir / "trace.jsonl").string(), "--rules", data("rules/honeywall.rules"), "--config",
             data("config/reference.json"), "--out", (dir / "out").string()});
    EXPECT_EQ(r.status, 0) << r.err;
    LoadedStores l = read_store_dir(dir / "out");
    ASSERT_EQ(l.stores.forwarded.size(), 2u);
    EXPECT_EQ(l.stores.forwarded[0], trace[0]);
    EXPECT_NE(l.stores.forwarded[1].payload, sled);
    std::filesystem::remove_all(dir);
}

TEST(Replay, OutOfOrderTraceIsDataError) {
    auto dir = testing::scratch_dir("cli-replay-order");
    {
        std::ofstream out(dir / "trace.jsonl");
        write_trace(out, {testing::make_tcp(Ipv4(1, 1, 1, 1), 1, Ipv4(10, 1, 0, 5), 80, kSyn, {}, SimTime(10)),
                          testing::make_tcp(Ipv4(1, 1, 1, 1), 2, Ipv4(10, 1, 0, 5), 80, kSyn, {}, SimTime(5))});
    }
    EXPECT_EQ(cli({"replay", (dir / "trace.jsonl").string(), "--rules", data("rules/honeywall.rules")}).status, 1);
    std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace honeynet
