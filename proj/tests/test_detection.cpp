#include <catch2/catch_amalgamated.hpp>

#include "lnsim/detection.hpp"
#include "lnsim/harness.hpp"

using namespace lnsim;

namespace {

// Pure-stream poisoning oracle: insert one amount at a given in-frame
// position and decode the merged stream.
bool silently_equal_after_injection(const std::string& command, Scheme scheme, Sat inject,
                                    std::size_t pos) {
    EncodedCommand enc =
        scheme == Scheme::ascii ? encode_ascii(command) : encode_huffman(command);
    std::vector<Sat> wire = frame_amounts(enc);
    REQUIRE(pos >= 1);
    REQUIRE(pos < wire.size());
    wire.insert(wire.begin() + static_cast<std::ptrdiff_t>(pos), inject);
    StreamDecode dec = decode_stream(wire, scheme);
    bool any_corrupt = false;
    for (auto& f : dec.frames)
        if (f.status != DecodedFrame::Status::ok) any_corrupt = true;
    return !any_corrupt && dec.commands.size() == 1 && dec.commands[0] == command;
}

}  // namespace

TEST_CASE("timing correlation ranks the botmaster first on the monitored fixture") {
    Engine e = detail::make_fig8_engine(1);
    for (int i = 0; i < 6; ++i) {
        std::vector<NodeId> path = i % 2 == 0 ? std::vector<NodeId>{"bm", "a", "b", "c", "cnc"}
                                              : std::vector<NodeId>{"bm", "d", "f", "g", "cnc"};
        Msat amt = (i % 2 == 0 ? 100 : 50) * kMsatPerSat;
        e.send_payment(detail::route_via(e.graph, path, amt), amt);
    }
    ObserverSet obs = collect_observers(e, {"a", "d", "cnc"}, "cnc");
    CHECK(obs.cnc_receipt_log.size() == 6);
    SuspectReport rep = timing_correlation(obs);
    REQUIRE_FALSE(rep.suspect_edges.empty());
    CHECK(rep.suspect_edges.front().first == "bm");
    CHECK(rep.suspect_edges.front().second == Catch::Approx(6.0 / 7.0));
    for (auto& [n, s] : rep.suspect_edges) {
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
    for (std::size_t i = 1; i < rep.suspect_edges.size(); ++i)
        CHECK(rep.suspect_edges[i - 1].second >= rep.suspect_edges[i].second);
}

TEST_CASE("a single receipt never lifts a suspect above one half") {
    Engine e = detail::make_fig8_engine(2);
    Msat amt = 50 * kMsatPerSat;
    e.send_payment(detail::route_via(e.graph, {"bm", "d", "f", "g", "cnc"}, amt), amt);
    ObserverSet obs = collect_observers(e, {"a", "d", "cnc"}, "cnc");
    SuspectReport rep = timing_correlation(obs);
    for (auto& [n, s] : rep.suspect_edges) CHECK(s <= 0.5);
}

TEST_CASE("correlation is empty without matching amounts or logs") {
    SuspectReport empty = timing_correlation(ObserverSet{});
    CHECK(empty.suspect_edges.empty());

    Engine e = detail::make_fig8_engine(3);
    Msat amt = 100 * kMsatPerSat;
    e.send_payment(detail::route_via(e.graph, {"bm", "a", "b", "c", "cnc"}, amt), amt);
    ObserverSet obs = collect_observers(e, {"a", "cnc"}, "cnc");
    // amounts shifted far outside fee slack cannot match
    for (auto& f : obs.forwards) f.amt_out_msat += 5'000'000;
    CHECK(timing_correlation(obs).suspect_edges.empty());
    // a forward long before the window cannot match either
    obs = collect_observers(e, {"a", "cnc"}, "cnc");
    for (auto& f : obs.forwards) f.timestamp -= 1'000'000;
    CHECK(timing_correlation(obs).suspect_edges.empty());
}

TEST_CASE("observers only see their own events") {
    Engine e = detail::make_fig8_engine(4);
    Msat amt = 100 * kMsatPerSat;
    e.send_payment(detail::route_via(e.graph, {"bm", "a", "b", "c", "cnc"}, amt), amt);
    ObserverSet with_a = collect_observers(e, {"a", "b", "cnc"}, "cnc");
    ObserverSet without_a = collect_observers(e, {"b", "cnc"}, "cnc");
    CHECK(with_a.forwards.size() == without_a.forwards.size() + 1);
    for (auto& f : without_a.forwards) CHECK(f.observer != "a");
    // an uncompromised C&C contributes no receipt log
    ObserverSet no_cnc = collect_observers(e, {"a"}, "cnc");
    CHECK(no_cnc.cnc_receipt_log.empty());
}

TEST_CASE("policy scan equals the brute-force flagged set") {
    Engine e(5);
    PolicyK policy = derive_capacities("xi", 10);
    e.graph = make_synthetic_innocent_graph(20, 30, 5, &policy);
    FormationParams params;
    params.m = 2;
    Formation f(e, params, policy);
    f.form_network({1000, 2000, 3000, 4000, 5000});
    std::set<NodeId> truth;
    for (auto& st : f.states())
        for (auto& cid : st->innocent_channels)
            if (e.graph.channel(cid).is_open()) truth.insert(st->node);
    ScanResult r = scan_policy_channels(e.graph, policy, truth);
    // brute force over every open public channel
    std::vector<std::string> oracle;
    for (auto& [cid, c] : e.graph.channels)
        if (c.is_open() && !c.is_private && policy.member(c.capacity_sat))
            oracle.push_back(cid);
    std::sort(oracle.begin(), oracle.end());
    std::vector<std::string> flagged = r.flagged_channels;
    std::sort(flagged.begin(), flagged.end());
    CHECK(flagged == oracle);
    CHECK(r.recall == 1.0);  // every discoverable server is caught
    CHECK(r.false_positives == 0);
    // a wrong hypothesis finds nothing on this graph
    PolicyK wrong = derive_capacities("other-xi", 10);
    ScanResult miss = scan_policy_channels(e.graph, wrong, truth);
    CHECK(miss.true_positives == 0);
    CHECK(scan_policy_channels(ChannelGraph{}, policy).flagged_channels.empty());
}

TEST_CASE("single in-frame injections never leave the command silently intact") {
    // exhaustive over positions for short frames; the poisoning soundness bound
    for (const std::string& cmd : {std::string("hi"), std::string("sudo ls"), std::string("66")}) {
        std::size_t wire_len = frame_amounts(encode_ascii(cmd)).size();
        for (std::size_t pos = 1; pos < wire_len; ++pos)
            for (Sat inject : {Sat(65), Sat(6), Sat(5), Sat(200)}) {
                INFO("ascii cmd '" << cmd << "' pos " << pos << " inject " << inject);
                CHECK_FALSE(silently_equal_after_injection(cmd, Scheme::ascii, inject, pos));
            }
    }
    for (const std::string& cmd : {std::string("sudo"), std::string("10")}) {
        std::size_t wire_len = frame_amounts(encode_huffman(cmd)).size();
        for (std::size_t pos = 1; pos < wire_len; ++pos)
            for (Sat inject : {Sat(1), Sat(2), Sat(3), Sat(4)}) {
                INFO("huffman cmd '" << cmd << "' pos " << pos << " inject " << inject);
                CHECK_FALSE(silently_equal_after_injection(cmd, Scheme::huffman, inject, pos));
            }
    }
}

TEST_CASE("live poisoning corrupts amount-encoded streams but not messages") {
    auto build = [](std::uint64_t seed) {
        Engine e(seed);
        e.latency = LatencyModel::fixed(100);
        e.graph.add_node("bm", "bm", 100'000'000, Role::botmaster);
        e.graph.add_node("mallory", "mallory", 100'000'000, Role::bot_observer);
        e.graph.add_node("relay", "relay", 100'000'000, Role::innocent);
        e.graph.add_node("cnc", "cnc", 0, Role::cnc);
        e.graph.open_channel("bm", "relay", 1'000'000, false);
        e.graph.open_channel("mallory", "relay", 1'000'000, false);
        e.graph.open_channel("relay", "cnc", 1'000'000, false);
        return e;
    };
    PoisonPlan plan;
    plan.target_cnc = "cnc";
    plan.injected_amounts = {65};

    Engine e1 = build(6);
    PoisonOutcome ascii = poison_stream(e1, "bm", "mallory", plan, "reboot", Scheme::ascii);
    CHECK(ascii.injections_landed == 1);
    CHECK(ascii.attacker_cost_sat == 65);
    CHECK(ascii.attacker_fee_msat > 0);  // two hops, the attacker pays routing fees
    CHECK_FALSE(ascii.delivered_equals_original);

    PoisonPlan hplan = plan;
    hplan.injected_amounts = {3};
    Engine e2 = build(7);
    PoisonOutcome huff = poison_stream(e2, "bm", "mallory", hplan, "sudo", Scheme::huffman);
    CHECK_FALSE(huff.delivered_equals_original);

    Engine e3 = build(8);
    PoisonOutcome noise = poison_stream(e3, "bm", "mallory", plan, "reboot", Scheme::noise);
    CHECK(noise.delivered_equals_original);
    CHECK(noise.decoded_text == "reboot");

    // a failed injection is recorded and the stream survives
    Engine e4 = build(9);
    PoisonPlan broken = plan;
    broken.injected_amounts = {200'000'000};  // beyond channel liquidity
    PoisonOutcome unlucky = poison_stream(e4, "bm", "mallory", broken, "reboot", Scheme::ascii);
    CHECK(unlucky.injection_failures == 1);
    CHECK(unlucky.delivered_equals_original);
}

TEST_CASE("fixed-time poisoning triggers on the clock") {
    Engine e(10);
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
    plan.injected_amounts = {66};
    plan.trigger = PoisonPlan::Trigger::fixed_time;
    plan.at_ms = 250;  // lands mid-frame at 100 ms per payment
    PoisonOutcome out = poison_stream(e, "bm", "mallory", plan, "reboot", Scheme::ascii);
    CHECK(out.injections_landed == 1);
    CHECK_FALSE(out.delivered_equals_original);
}

TEST_CASE("forged and replayed commands are rejected, neighbor commands accepted") {
    Engine e(11);
    PolicyK policy = derive_capacities("xi", 8);
    e.graph = make_synthetic_innocent_graph(20, 30, 11, &policy);
    FormationParams params;
    params.m = 2;
    Formation f(e, params, policy);
    f.form_network({1000, 2000, 3000});
    LogicalTopology topo = f.topology();
    e.graph.add_node("mallory", "mallory", 0, Role::bot_observer);

    CHECK(verify_auth_rejection(e, topo, "mallory", "cnc2", "rm -rf /"));
    CHECK(verify_auth_rejection(e, topo, "ghost", "cnc2", "x"));
    NodeId neighbor = topo.nodes.at("cnc2").all().front();
    CHECK_FALSE(verify_auth_rejection(e, topo, neighbor, "cnc2", "status"));
    CHECK(verify_auth_rejection(e, topo, neighbor, "cnc2", "status", "f1", nullptr, true));
    std::set<std::string> executed{"f1"};
    CHECK(verify_auth_rejection(e, topo, neighbor, "cnc2", "status", "f1", &executed));
    CHECK_THROWS_AS(verify_auth_rejection(e, topo, "x", "not-a-cnc", "x"), NotFoundError);
}
