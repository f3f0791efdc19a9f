#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lnsim/detection.hpp"
#include "lnsim/propagation.hpp"

namespace lnsim {

// BTC with trailing zeros trimmed, e.g. 4620 sat -> "0.0000462".
inline std::string btc_str(Sat sat) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.8f", to_btc(sat));
    std::string s(buf);
    while (s.size() > 1 && s.back() == '0') s.pop_back();
    if (s.back() == '.') s.push_back('0');
    return s;
}

struct ScenarioConfig {
    std::string scenario;  // optional in the file; the CLI names the scenario
    std::string command = "sudo hping3 -i u1 -S -p 80 -c 10 192.168.1.1";
    std::vector<std::size_t> servers = {10, 25, 50, 100};
    std::size_t trials = 30;
    std::size_t m = 3;
    std::size_t h = 10;
    std::size_t frames = 6;
    std::string policy_seed = "xi";
    Sat fixed_fee_sat = 4;
    Sat noise_fee_sat = 2;
    SimTime latency_ms = 7000;
    SimTime noise_latency_ms = 2000;
    std::size_t forgery_attempts = 1000;

    static ScenarioConfig from_json(const nlohmann::json& j) {
        if (!j.is_object()) throw ConfigError("config: top level must be an object");
        ScenarioConfig c;
        static const std::set<std::string> known = {
            "scenario",      "command",       "servers",        "trials",
            "m",             "h",             "frames",         "policy_seed",
            "fixed_fee_sat", "noise_fee_sat", "latency_ms",     "noise_latency_ms",
            "forgery_attempts"};
        for (auto& [key, val] : j.items())
            if (!known.count(key)) throw ConfigError("config: unknown key '" + key + "'");
        if (j.contains("scenario")) c.scenario = j["scenario"].get<std::string>();
        if (j.contains("command")) c.command = j["command"].get<std::string>();
        if (j.contains("servers")) c.servers = j["servers"].get<std::vector<std::size_t>>();
        if (j.contains("trials")) c.trials = j["trials"].get<std::size_t>();
        if (j.contains("m")) c.m = j["m"].get<std::size_t>();
        if (j.contains("h")) c.h = j["h"].get<std::size_t>();
        if (j.contains("frames")) c.frames = j["frames"].get<std::size_t>();
        if (j.contains("policy_seed")) c.policy_seed = j["policy_seed"].get<std::string>();
        if (j.contains("fixed_fee_sat")) c.fixed_fee_sat = j["fixed_fee_sat"].get<Sat>();
        if (j.contains("noise_fee_sat")) c.noise_fee_sat = j["noise_fee_sat"].get<Sat>();
        if (j.contains("latency_ms")) c.latency_ms = j["latency_ms"].get<SimTime>();
        if (j.contains("noise_latency_ms"))
            c.noise_latency_ms = j["noise_latency_ms"].get<SimTime>();
        if (j.contains("forgery_attempts"))
            c.forgery_attempts = j["forgery_attempts"].get<std::size_t>();
        return c;
    }

    nlohmann::json to_json() const {
        return {{"scenario", scenario},
                {"command", command},
                {"servers", servers},
                {"trials", trials},
                {"m", m},
                {"h", h},
                {"frames", frames},
                {"policy_seed", policy_seed},
                {"fixed_fee_sat", fixed_fee_sat},
                {"noise_fee_sat", noise_fee_sat},
                {"latency_ms", latency_ms},
                {"noise_latency_ms", noise_latency_ms},
                {"forgery_attempts", forgery_attempts}};
    }

    std::uint64_t digest(std::uint64_t seed) const {
        return fnv1a64(to_json().dump() + "#" + std::to_string(seed));
    }
};

struct Report {
    std::string scenario;
    std::uint64_t seed = 0;
    std::uint64_t config_digest = 0;
    std::map<std::string, std::string> tables;  // name -> CSV body

    nlohmann::json summary() const {
        nlohmann::json j;
        j["scenario"] = scenario;
        j["seed"] = seed;
        j["config_digest"] = config_digest;
        j["tables"] = nlohmann::json::array();
        for (auto& [name, body] : tables) j["tables"].push_back(name);
        return j;
    }

    void write(const std::string& dir) const {
        namespace fs = std::filesystem;
        fs::create_directories(dir);
        for (auto& [name, body] : tables) {
            std::ofstream f(fs::path(dir) / (name + ".csv"), std::ios::binary);
            if (!f) throw SimError("cannot write " + name + ".csv in " + dir);
            f << body;
        }
        std::ofstream f(fs::path(dir) / "summary.json", std::ios::binary);
        f << summary().dump(2) << '\n';
    }
};

namespace detail {

// Direct fixture: botmaster and one C&C per server joined by one big channel,
// so a command payment is a single hop (no routing fee, no forwarders).
inline Engine make_direct_engine(std::uint64_t seed, std::size_t servers, SimTime latency_ms) {
    Engine e(seed);
    e.latency = LatencyModel::fixed(latency_ms);
    e.graph.add_node("bm", "bm", 1'000'000'000, Role::botmaster);
    for (std::size_t i = 1; i <= servers; ++i) {
        std::string id = "cnc" + std::to_string(i);
        e.graph.add_node(id, id, 0, Role::cnc);
        e.graph.open_channel("bm", id, 10'000'000, false);
    }
    return e;
}

// Relay fixture: bm - relay - cnc_i, so every payment crosses two hops and
// the route-level fixed fee is actually collected by a forwarder.
inline Engine make_relay_engine(std::uint64_t seed, std::size_t servers, Sat fixed_fee_sat,
                                SimTime latency_ms) {
    Engine e(seed);
    e.latency = LatencyModel::fixed(latency_ms);
    e.fee_model = FeeModel::fixed(fixed_fee_sat);
    e.graph.add_node("bm", "bm", 1'000'000'000, Role::botmaster);
    e.graph.add_node("relay", "relay", 1'000'000'000, Role::innocent);
    e.graph.open_channel("bm", "relay", 100'000'000, false);
    for (std::size_t i = 1; i <= servers; ++i) {
        std::string id = "cnc" + std::to_string(i);
        e.graph.add_node(id, id, 0, Role::cnc);
        e.graph.open_channel("relay", id, 1'000'000, false);
    }
    return e;
}

// Replays per-channel fee accumulation along an explicit node path; lets a
// scenario force a route Dijkstra would not pick.
inline Route route_via(const ChannelGraph& g, const std::vector<NodeId>& path, Msat amount_msat) {
    if (path.size() < 2) throw SimError("route_via: need at least two nodes");
    auto find_chan = [&](const NodeId& a, const NodeId& b) -> const Channel& {
        for (auto& [cid, c] : g.channels)
            if (c.is_open() && c.has_endpoint(a) && c.has_endpoint(b)) return c;
        throw NoRouteError("route_via: no open channel between " + a + " and " + b);
    };
    Route r;
    Msat amt = amount_msat;
    std::vector<RouteHop> rev;
    for (std::size_t i = path.size() - 1; i > 0; --i) {
        const Channel& c = find_chan(path[i - 1], path[i]);
        RouteHop h;
        h.chan_id = c.chan_id;
        h.from = path[i - 1];
        h.to = path[i];
        h.amt_to_forward_msat = amt;
        h.fee_msat = i > 1 ? compute_fee(c.fee, amt) : 0;
        amt += h.fee_msat;
        rev.push_back(h);
    }
    r.hops.assign(rev.rbegin(), rev.rend());
    for (auto& h : r.hops) r.total_fee_msat += h.fee_msat;
    r.total_amt_msat = amount_msat + r.total_fee_msat;
    return r;
}

}  // namespace detail

// Formation cost table: per-server rendezvous cost is 3 public channels of
// 20,000 sat, fees tallied from the simulated ledger, capital recovered by
// closing.
inline Report scenario_table1(const ScenarioConfig& cfg, std::uint64_t seed) {
    Report rep;
    std::ostringstream os;
    os << "servers,open_fee_sat,open_fee_btc,locked_sat_per_server,recovered_sat_per_server\n";
    for (std::size_t n : cfg.servers) {
        Engine e(seed);
        for (int p = 0; p < 3; ++p)
            e.graph.add_node("peer" + std::to_string(p), "peer" + std::to_string(p), 0);
        std::vector<std::vector<std::string>> opened(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::string id = "cnc" + std::to_string(i + 1);
            e.graph.add_node(id, id, 100'000, Role::cnc);
            for (int p = 0; p < 3; ++p)
                opened[i].push_back(
                    e.graph.open_channel(id, "peer" + std::to_string(p), 20'000, false));
        }
        Sat fees = e.graph.total_onchain_fees_sat();
        Sat locked = e.graph.total_locked_sat() / static_cast<Sat>(n);
        Sat recovered = 0;
        for (std::size_t i = 0; i < n; ++i) {
            Sat before = e.graph.node("cnc" + std::to_string(i + 1)).wallet_sat;
            for (auto& cid : opened[i])
                e.graph.close_channel(cid, "cnc" + std::to_string(i + 1));
            recovered = e.graph.node("cnc" + std::to_string(i + 1)).wallet_sat - before;
        }
        os << n << ',' << fees << ',' << btc_str(fees) << ',' << locked << ',' << recovered
           << '\n';
    }
    rep.tables["table1"] = os.str();
    return rep;
}

// Command cost and delay per C&C over a direct channel: amounts are the
// whole cost, fees zero, per-payment latency fixed.
inline Report scenario_table3(const ScenarioConfig& cfg, std::uint64_t seed) {
    Report rep;
    std::ostringstream os;
    os << "scheme,payments,total_sat,fee_sat,duration_s\n";
    for (Scheme s : {Scheme::ascii, Scheme::huffman}) {
        Engine e = detail::make_direct_engine(seed, 1, cfg.latency_ms);
        SendReport sr = send_command(e, "bm", "cnc1", cfg.command, s);
        os << scheme_name(s) << ',' << sr.payments << ',' << sr.total_sat << ','
           << sr.fee_msat / kMsatPerSat << ',' << to_seconds(sr.duration_ms) << '\n';
    }
    {
        Engine e = detail::make_direct_engine(seed, 1, cfg.noise_latency_ms);
        SendReport sr = send_command_noise(e, "bm", "cnc1", cfg.command);
        os << scheme_name(Scheme::noise) << ',' << sr.payments << ',' << sr.total_sat << ','
           << sr.fee_msat / kMsatPerSat << ',' << to_seconds(sr.duration_ms) << '\n';
    }
    rep.tables["table3"] = os.str();
    return rep;
}

// Routing fee table under the fixed per-payment fee model, two-hop routes.
inline Report scenario_table4(const ScenarioConfig& cfg, std::uint64_t seed) {
    Report rep;
    std::ostringstream os;
    os << "scheme,servers,total_fee_sat,total_fee_btc,total_duration_s\n";
    for (std::size_t n : cfg.servers) {
        for (Scheme s : {Scheme::ascii, Scheme::huffman}) {
            Engine e = detail::make_relay_engine(seed, n, cfg.fixed_fee_sat, cfg.latency_ms);
            Msat fee = 0;
            SimTime dur = 0;
            for (std::size_t i = 1; i <= n; ++i) {
                SendReport sr =
                    send_command(e, "bm", "cnc" + std::to_string(i), cfg.command, s);
                fee += sr.fee_msat;
                dur += sr.duration_ms;
            }
            os << scheme_name(s) << ',' << n << ',' << fee / kMsatPerSat << ','
               << btc_str(fee / kMsatPerSat) << ',' << to_seconds(dur) << '\n';
        }
        {
            Engine e = detail::make_relay_engine(seed, n, cfg.noise_fee_sat, cfg.noise_latency_ms);
            Msat fee = 0;
            SimTime dur = 0;
            for (std::size_t i = 1; i <= n; ++i) {
                SendReport sr = send_command_noise(e, "bm", "cnc" + std::to_string(i), cfg.command);
                fee += sr.fee_msat;
                dur += sr.duration_ms;
            }
            os << scheme_name(Scheme::noise) << ',' << n << ',' << fee / kMsatPerSat << ','
               << btc_str(fee / kMsatPerSat) << ',' << to_seconds(dur) << '\n';
        }
    }
    rep.tables["table4"] = os.str();
    return rep;
}

// Flood propagation means over formed topologies.
inline Report scenario_table5(const ScenarioConfig& cfg, std::uint64_t seed) {
    Report rep;
    std::ostringstream os;
    os << "servers,mean_total_s\n";
    for (auto& row : measure_propagation(seed, cfg.servers, cfg.m, cfg.trials))
        os << row.n << ',' << row.mean_total_s << '\n';
    rep.tables["table5"] = os.str();
    return rep;
}

namespace detail {

// 8 nodes, 9 channels: two disjoint 3-intermediary paths from the botmaster
// to a C&C, plus one cross link.
inline Engine make_fig8_engine(std::uint64_t seed) {
    Engine e(seed);
    for (auto* n : {"bm", "a", "b", "c", "d", "f", "g", "cnc"})
        e.graph.add_node(n, n, 100'000'000, n == std::string("bm") ? Role::botmaster
                         : n == std::string("cnc") ? Role::cnc
                                                   : Role::innocent);
    e.graph.open_channel("bm", "a", 1'000'000, false);
    e.graph.open_channel("a", "b", 1'000'000, false);
    e.graph.open_channel("b", "c", 1'000'000, false);
    e.graph.open_channel("c", "cnc", 1'000'000, false);
    e.graph.open_channel("bm", "d", 1'000'000, false);
    e.graph.open_channel("d", "f", 1'000'000, false);
    e.graph.open_channel("f", "g", 1'000'000, false);
    e.graph.open_channel("g", "cnc", 1'000'000, false);
    e.graph.open_channel("b", "f", 1'000'000, false);
    return e;
}

}  // namespace detail

// Timing-analysis scenario: frames through both monitored paths, then the
// single-receipt control showing score separation collapse.
inline Report scenario_fig8_timing(const ScenarioConfig& cfg, std::uint64_t seed) {
    Report rep;
    {
        Engine e = detail::make_fig8_engine(seed);
        for (std::size_t i = 0; i < cfg.frames; ++i) {
            std::vector<NodeId> path = i % 2 == 0
                                           ? std::vector<NodeId>{"bm", "a", "b", "c", "cnc"}
                                           : std::vector<NodeId>{"bm", "d", "f", "g", "cnc"};
            Msat amt = (i % 2 == 0 ? 100 : 50) * kMsatPerSat;
            e.send_payment(detail::route_via(e.graph, path, amt), amt);
        }
        ObserverSet obs = collect_observers(e, {"a", "d", "cnc"}, "cnc");
        SuspectReport sr = timing_correlation(obs);
        rep.tables["suspects"] = sr.csv();
    }
    {
        Engine e = detail::make_fig8_engine(seed + 1);
        Msat amt = 50 * kMsatPerSat;
        e.send_payment(detail::route_via(e.graph, {"bm", "d", "f", "g", "cnc"}, amt), amt);
        ObserverSet obs = collect_observers(e, {"a", "d", "cnc"}, "cnc");
        SuspectReport sr = timing_correlation(obs);
        std::ostringstream os;
        os << "upstream,score,exceeds_half\n";
        for (auto& [n, s] : sr.suspect_edges)
            os << n << ',' << s << ',' << (s > 0.5 ? 1 : 0) << '\n';
        rep.tables["single_receipt"] = os.str();
    }
    return rep;
}

// Poisoning scenario: one injected payment against each scheme.
inline Report scenario_poison(const ScenarioConfig& cfg, std::uint64_t seed) {
    Report rep;
    std::ostringstream os;
    os << "scheme,injected_amount_sat,corrupted,equals_original,injections_landed,"
          "attacker_cost_sat\n";
    struct Case {
        Scheme scheme;
        Sat amount;
    };
    for (Case cs : {Case{Scheme::ascii, 65}, Case{Scheme::huffman, 3}, Case{Scheme::noise, 65}}) {
        Engine e(seed);
        e.latency = LatencyModel::fixed(100);
        e.graph.add_node("bm", "bm", 100'000'000, Role::botmaster);
        e.graph.add_node("mallory", "mallory", 100'000'000, Role::bot_observer);
        e.graph.add_node("relay", "relay", 100'000'000, Role::innocent);
        e.graph.add_node("cnc", "cnc", 0, Role::cnc);
        e.graph.open_channel("bm", "relay", 1'000'000, false);
        e.graph.open_channel("mallory", "relay", 1'000'000, false);
        e.graph.open_channel("relay", "cnc", 1'000'000, false);
        PoisonPlan plan;
        plan.target_cnc = "cnc";
        plan.injected_amounts = {cs.amount};
        PoisonOutcome out =
            poison_stream(e, "bm", "mallory", plan, cfg.command, cs.scheme);
        os << scheme_name(cs.scheme) << ',' << cs.amount << ',' << (out.frame_corrupted ? 1 : 0)
           << ',' << (out.delivered_equals_original ? 1 : 0) << ',' << out.injections_landed
           << ',' << out.attacker_cost_sat << '\n';
    }
    rep.tables["poison"] = os.str();
    return rep;
}

// Authentication scenario: seeded forgery attempts against a formed network.
inline Report scenario_auth(const ScenarioConfig& cfg, std::uint64_t seed) {
    Report rep;
    Engine e(seed);
    PolicyK policy = derive_capacities(cfg.policy_seed, 8);
    e.graph = make_synthetic_innocent_graph(20, 30, seed, &policy);
    FormationParams params;
    params.m = cfg.m;
    params.h = cfg.h;
    Formation formation(e, params, policy);
    formation.form_network({60'000, 120'000, 180'000, 240'000, 300'000});
    LogicalTopology topo = formation.topology();
    e.graph.add_node("mallory", "mallory", 1'000'000, Role::bot_observer);

    Rng rng = e.rng.split("forgery");
    std::size_t rejected = 0;
    for (std::size_t i = 0; i < cfg.forgery_attempts; ++i) {
        NodeId target = "cnc" + std::to_string(1 + rng.uniform_int(0, 4));
        int kind = static_cast<int>(rng.uniform_int(0, 2));
        bool ok;
        switch (kind) {
            case 0:  // known node outside the neighbor database
                ok = verify_auth_rejection(e, topo, "mallory", target, "rm -rf /");
                break;
            case 1:  // signer absent from the graph entirely
                ok = verify_auth_rejection(e, topo, "ghost" + std::to_string(i), target, "x");
                break;
            default:  // neighbor identity but tampered body
                ok = verify_auth_rejection(
                    e, topo, topo.nodes.at(target).all().empty()
                                 ? "mallory"
                                 : topo.nodes.at(target).all().front(),
                    target, "x", "f" + std::to_string(i), nullptr, /*tamper=*/true);
                break;
        }
        if (ok) rejected++;
    }
    std::ostringstream os;
    os << "attempts,rejected,accepted\n";
    os << cfg.forgery_attempts << ',' << rejected << ',' << (cfg.forgery_attempts - rejected)
       << '\n';
    rep.tables["auth"] = os.str();
    return rep;
}

using ScenarioFn = std::function<Report(const ScenarioConfig&, std::uint64_t)>;

inline const std::map<std::string, ScenarioFn>& scenario_registry() {
    static const std::map<std::string, ScenarioFn> reg = {
        {"table1", scenario_table1},   {"table3", scenario_table3},
        {"table4", scenario_table4},   {"table5", scenario_table5},
        {"fig8-timing", scenario_fig8_timing},
        {"poison", scenario_poison},   {"auth", scenario_auth},
    };
    return reg;
}

inline std::vector<std::string> list_scenarios() {
    std::vector<std::string> out;
    for (auto& [name, fn] : scenario_registry()) out.push_back(name);
    return out;
}

inline Report run_scenario(const std::string& name, const ScenarioConfig& cfg,
                           std::uint64_t seed) {
    auto it = scenario_registry().find(name);
    if (it == scenario_registry().end())
        throw ConfigError("unknown scenario '" + name + "'");
    if (!cfg.scenario.empty() && cfg.scenario != name)
        throw ConfigError("config names scenario '" + cfg.scenario + "' but '" + name +
                          "' was requested");
    Report rep;
    try {
        rep = it->second(cfg, seed);
    } catch (const SimError& e) {
        throw SimError("scenario " + name + " failed: " + e.what());
    }
    rep.scenario = name;
    rep.seed = seed;
    rep.config_digest = cfg.digest(seed);
    return rep;
}

// Loads a written report directory back for pretty-printing.
inline Report load_report(const std::string& dir) {
    namespace fs = std::filesystem;
    Report rep;
    fs::path sj = fs::path(dir) / "summary.json";
    if (!fs::exists(sj)) return rep;  // empty report
    std::ifstream f(sj);
    nlohmann::json j = nlohmann::json::parse(f);
    rep.scenario = j.value("scenario", "");
    rep.seed = j.value("seed", 0ull);
    rep.config_digest = j.value("config_digest", 0ull);
    for (auto& name : j["tables"]) {
        std::ifstream tf(fs::path(dir) / (name.get<std::string>() + ".csv"), std::ios::binary);
        std::ostringstream body;
        body << tf.rdbuf();
        rep.tables[name.get<std::string>()] = body.str();
    }
    return rep;
}

inline std::string render_report(const Report& rep) {
    std::ostringstream os;
    if (rep.tables.empty()) {
        os << "empty report: no tables found\n";
        return os.str();
    }
    os << "scenario: " << rep.scenario << "  seed: " << rep.seed
       << "  config digest: " << rep.config_digest << "\n";
    for (auto& [name, body] : rep.tables) {
        os << "\n[" << name << "]\n";
        std::istringstream is(body);
        std::string line;
        while (std::getline(is, line)) {
            for (char& c : line)
                if (c == ',') c = '\t';
            os << "  " << line << "\n";
        }
    }
    return os.str();
}

}  // namespace lnsim
