#pragma once

/// @file cli.hpp
/// @brief The `honeynet` command line. Exit status: 0 success, 1 bad input
/// data, 2 bad usage.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "honeynet/opsreport.hpp"
#include "honeynet/rulelang.hpp"
#include "honeynet/simnet.hpp"
#include "honeynet/stores.hpp"
#include "honeynet/trace.hpp"

namespace honeynet {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDataError = 1;
inline constexpr int kExitUsage = 2;

/// Raised for unreadable inputs and other failures that are the data's fault.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace cli_detail {

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read " + p.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline RuleSet load_rules(const std::filesystem::path& p) {
    try {
        return parse_ruleset(read_file(p));
    } catch (const ParseError& e) {
        throw DataError(p.string() + ":" + e.what());
    }
}

/// Writes config.json and alerts.jsonl next to the stores.
inline std::vector<Alert> finish_store_dir(const std::filesystem::path& dir, const StoreSet& stores, const Config& cfg) {
    std::ofstream(dir / store_files::kConfig, std::ios::binary | std::ios::trunc) << config_to_json(cfg).dump(2) << '\n';
    auto hits = scan_for_tokens(stores, cfg.all_tokens(), cfg.net);
    auto alerts = evaluate_alerts(stores.events, hits, cfg.alerts);
    write_jsonl_file(dir / store_files::kAlerts, to_lines(alerts, alert_to_json));
    return alerts;
}

inline int check_rules(const std::string& file, std::ostream& out) {
    out << render(load_rules(file));
    return kExitOk;
}

inline int run(const std::string& scenario_file, const std::string& rules_file, const std::string& config_file,
               const std::string& out_dir, std::ostream& out) {
    Config cfg = load_config(config_file);
    RuleSet rules = load_rules(rules_file);
    check_alert_sids(cfg, rules);
    Scenario sc = with_planted_tokens(load_scenario(scenario_file), cfg);
    EventLog log = run_scenario(sc, cfg.net, rules, cfg.quota);

    const std::filesystem::path dir(out_dir);
    write_event_log(dir, log);
    auto alerts = finish_store_dir(dir, log.stores, cfg);

    out << "scenario " << (sc.name.empty() ? scenario_file : sc.name) << ": " << log.stores.packets.size()
        << " packets, " << log.stores.events.size() << " gateway events, " << log.stores.capture.records.size()
        << " capture records, " << alerts.size() << " alerts\n";
    for (const auto& [ip, compromised] : log.compromised)
        out << "  " << ip.str() << " (" << to_string(sc.find_host(ip)->role) << ") "
            << (compromised ? "compromised" : "intact") << '\n';
    return kExitOk;
}

inline int replay(const std::string& trace_file, const std::string& rules_file, const std::string& config_file,
                  const std::string& out_dir, std::ostream& out, std::ostream& err) {
    Config cfg = config_file.empty() ? Config{} : load_config(config_file);
    RuleSet rules = load_rules(rules_file);
    check_alert_sids(cfg, rules);
    std::ifstream in(trace_file, std::ios::binary);
    if (!in) throw DataError("cannot read " + trace_file);
    LineErrors errors;
    std::vector<Packet> packets = read_trace(in, errors);
    for (const auto& m : errors.messages) err << trace_file << ": skipped " << m << '\n';

    StoreSet stores;
    Honeywall gateway(cfg.net, rules, cfg.quota, stores);
    for (const auto& p : packets) {
        try {
            gateway.handle(p);
        } catch (const std::invalid_argument& e) {
            throw DataError(trace_file + ": " + e.what());
        }
    }
    if (out_dir.empty()) {
        for (const auto& e : stores.events) out << event_to_json(e).dump() << '\n';
    } else {
        write_store_dir(out_dir, stores);
        auto alerts = finish_store_dir(out_dir, stores, cfg);
        out << "replayed " << packets.size() << " packets: " << stores.forwarded.size() << " forwarded, "
            << stores.events.size() << " gateway events, " << alerts.size() << " alerts\n";
    }
    return kExitOk;
}

inline void require_dir(const std::string& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError(dir + " is not a directory");
}

inline int report(const std::string& dir, std::ostream& out) {
    require_dir(dir);
    Report r = compute_report(std::filesystem::path(dir));
    out << report_table(r) << '\n' << report_to_json(r).dump() << '\n';
    return kExitOk;
}

inline int tokens(const std::string& dir, std::ostream& out) {
    require_dir(dir);
    const std::filesystem::path d(dir);
    Config cfg;
    if (std::filesystem::exists(d / store_files::kConfig)) cfg = load_config(d / store_files::kConfig);
    LoadedStores l = read_store_dir(d);
    for (const auto& h : scan_for_tokens(l.stores, cfg.all_tokens(), cfg.net)) out << token_hit_to_json(h).dump() << '\n';
    return kExitOk;
}

}  // namespace cli_detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Honeynet gateway simulator and forensic tools", "honeynet"};
    app.require_subcommand(1, 1);

    std::string file;
    auto* check = app.add_subcommand("check-rules", "Parse a rule file and print its canonical form");
    check->add_option("file", file, "Rule file")->required();

    std::string scenario, rules, config, out_dir;
    auto* run = app.add_subcommand("run", "Run a scenario and write all stores");
    run->add_option("scenario", scenario, "Scenario JSON file")->required();
    run->add_option("--rules", rules, "Rule file")->required();
    run->add_option("--config", config, "Config JSON file")->required();
    run->add_option("--out", out_dir, "Output directory")->required();

    std::string trace;
    auto* replay = app.add_subcommand("replay", "Feed a packet trace through the gateway");
    replay->add_option("trace", trace, "Packet trace (JSON Lines)")->required();
    replay->add_option("--rules", rules, "Rule file")->required();
    replay->add_option("--config", config, "Config JSON file (default: reference network)");
    replay->add_option("--out", out_dir, "Write stores here instead of printing events");

    std::string dir;
    auto* report = app.add_subcommand("report", "Print the traffic report of a store directory");
    report->add_option("dir", dir, "Store directory")->required();
    auto* tokens = app.add_subcommand("tokens", "List honeytoken sightings in a store directory");
    tokens->add_option("dir", dir, "Store directory")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n' << "run with --help for usage\n";
        return kExitUsage;
    }

    try {
        if (*check) return cli_detail::check_rules(file, out);
        if (*run) return cli_detail::run(scenario, rules, config, out_dir, out);
        if (*replay) return cli_detail::replay(trace, rules, config, out_dir, out, err);
        if (*report) return cli_detail::report(dir, out);
        if (*tokens) return cli_detail::tokens(dir, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitDataError;
    }
    return kExitUsage;
}

inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, out, err);
}

}  // namespace honeynet
