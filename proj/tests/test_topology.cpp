#include <catch2/catch_amalgamated.hpp>

#include "lnsim/topology.hpp"

using namespace lnsim;

namespace {

// Money conservation in msat: wallets + channel balances + on-chain fees +
// settlement dust must equal the initial endowment.
Msat total_msat(const ChannelGraph& g) {
    Msat s = g.total_wallet_sat() * kMsatPerSat;
    for (auto& [cid, c] : g.channels)
        if (c.is_open()) s += c.balance1_msat + c.balance2_msat;
    return s + g.total_onchain_fees_sat() * kMsatPerSat + g.dust_burned_msat();
}

}  // namespace

TEST_CASE("open_channel debits funder and charges the on-chain fee") {
    ChannelGraph g;
    g.add_node("a", "a", 100'000);
    g.add_node("b", "b", 0);
    std::string cid = g.open_channel("a", "b", 20'000, false);
    const Channel& c = g.channel(cid);
    CHECK(g.node("a").wallet_sat == 100'000 - 20'000 - 154);
    CHECK(c.capacity_sat == 20'000);
    CHECK(c.balance1_msat == 20'000 * kMsatPerSat);
    CHECK(c.balance2_msat == 0);
    CHECK(g.total_onchain_fees_sat() == 154);
    CHECK(c.is_open());
}

TEST_CASE("open_channel rejects sub-floor capacity and insufficient funds") {
    ChannelGraph g;
    g.add_node("a", "a", 1'000'000);
    g.add_node("b", "b", 0);
    CHECK_THROWS_AS(g.open_channel("a", "b", 19'999, false), PolicyError);
    g.add_node("poor", "poor", 100);
    CHECK_THROWS_AS(g.open_channel("poor", "b", 20'000, false), InsufficientFundsError);
    CHECK_THROWS_WITH(g.open_channel("poor", "b", 20'000, false),
                      Catch::Matchers::ContainsSubstring("poor"));
}

TEST_CASE("close_channel settles both sides and burns sub-satoshi dust") {
    ChannelGraph g;
    g.add_node("a", "a", 100'000);
    g.add_node("b", "b", 0);
    Msat initial = total_msat(g);
    std::string cid = g.open_channel("a", "b", 20'000, false);
    Channel& c = g.channel(cid);
    // push 1500.5 sat to b: settlement floors each side
    c.balance1_msat -= 1'500'500;
    c.balance2_msat += 1'500'500;
    Settlement s = g.close_channel(cid, "a");
    CHECK(s.to_node1_sat == 18'499);
    CHECK(s.to_node2_sat == 1'500);
    CHECK(g.dust_burned_msat() == 1000);
    CHECK_FALSE(g.channel(cid).is_open());
    CHECK(total_msat(g) == initial);
    CHECK_THROWS_AS(g.close_channel(cid, "a"), SimError);
}

TEST_CASE("full open/pay/close cycle conserves money") {
    ChannelGraph g;
    g.add_node("a", "a", 500'000);
    g.add_node("b", "b", 500'000);
    Msat initial = total_msat(g);
    auto c1 = g.open_channel("a", "b", 30'000, false);
    auto c2 = g.open_channel("b", "a", 25'000, false);
    g.channel(c1).balance1_msat -= 4'000'000;
    g.channel(c1).balance2_msat += 4'000'000;
    CHECK(total_msat(g) == initial);
    g.close_channel(c1, "a");
    g.close_channel(c2, "b");
    CHECK(total_msat(g) == initial);
    CHECK(g.total_locked_sat() == 0);
}

TEST_CASE("most_connected matches a brute-force degree count") {
    ChannelGraph g;
    Rng rng(42, "topo");
    for (int i = 0; i < 12; ++i)
        g.add_node("n" + std::to_string(i), "n" + std::to_string(i), 100'000'000);
    for (int e = 0; e < 30; ++e) {
        int a = static_cast<int>(rng.uniform_int(0, 11));
        int b = static_cast<int>(rng.uniform_int(0, 11));
        if (a == b) continue;
        g.open_channel("n" + std::to_string(a), "n" + std::to_string(b), 20'000, false);
    }
    auto top = g.most_connected(5);
    REQUIRE(top.size() == 5);
    std::map<NodeId, std::size_t> deg;
    for (auto& [nid, n] : g.nodes) deg[nid] = 0;
    for (auto& [cid, c] : g.channels)
        if (c.is_open() && !c.is_private) {
            deg[c.node1]++;
            deg[c.node2]++;
        }
    std::size_t cutoff = deg.at(top.back());
    for (std::size_t i = 1; i < top.size(); ++i) CHECK(deg.at(top[i - 1]) >= deg.at(top[i]));
    for (auto& [nid, d] : deg)
        if (std::find(top.begin(), top.end(), nid) == top.end()) CHECK(d <= cutoff);
}

TEST_CASE("most_connected breaks degree ties by pubkey order") {
    ChannelGraph g;
    for (auto* n : {"x", "m", "b"}) g.add_node(n, n, 1'000'000);
    g.open_channel("x", "m", 20'000, false);
    g.open_channel("m", "b", 20'000, false);
    g.open_channel("b", "x", 20'000, false);
    auto top = g.most_connected(3);
    CHECK(top == std::vector<NodeId>{"b", "m", "x"});
}

TEST_CASE("announcement subscription delivers public opens exactly once") {
    ChannelGraph g;
    g.add_node("a", "a", 10'000'000);
    g.add_node("b", "b", 10'000'000);
    g.open_channel("a", "b", 20'000, false);  // before subscribe, invisible
    auto sub = g.subscribe_announcements();
    auto c2 = g.open_channel("a", "b", 21'000, false);
    g.open_channel("a", "b", 22'000, true);  // private, never announced
    auto c4 = g.open_channel("b", "a", 23'000, false);
    CHECK(sub.poll() == std::vector<std::string>{c2, c4});
    CHECK(sub.poll().empty());
}

TEST_CASE("push announcements fire for public opens only") {
    ChannelGraph g;
    g.add_node("a", "a", 10'000'000);
    g.add_node("b", "b", 10'000'000);
    std::vector<Sat> seen;
    g.on_public_open([&](const Channel& c) { seen.push_back(c.capacity_sat); });
    g.open_channel("a", "b", 20'000, false);
    g.open_channel("a", "b", 21'000, true);
    g.open_channel("a", "b", 22'000, false);
    CHECK(seen == std::vector<Sat>{20'000, 22'000});
}

TEST_CASE("ledger records every event and the csv replays the fee total") {
    ChannelGraph g;
    g.add_node("a", "a", 10'000'000);
    g.add_node("b", "b", 0);
    auto c1 = g.open_channel("a", "b", 20'000, false, {}, 5);
    g.close_channel(c1, "a", 9);
    REQUIRE(g.ledger.size() == 2);
    CHECK(g.ledger[0].kind == OnChainEvent::Kind::open);
    CHECK(g.ledger[1].kind == OnChainEvent::Kind::close);
    CHECK(g.ledger[1].time == 9);
    Sat replayed = 0;
    for (auto& ev : g.ledger) replayed += ev.fee_sat;
    CHECK(replayed == g.total_onchain_fees_sat());
    CHECK(g.ledger_csv().rfind("kind,chan_id,funder,fee_sat,time\n", 0) == 0);
}

TEST_CASE("load_snapshot builds nodes and channels with a 50/50 split") {
    nlohmann::json doc = {
        {"nodes", {{{"pub_key", "alice"}}, {{"pub_key", "bob"}}}},
        {"edges",
         {{{"channel_id", "c0"},
           {"node1_pub", "alice"},
           {"node2_pub", "bob"},
           {"capacity", "50001"}}}}};
    ChannelGraph g = load_snapshot(doc);
    REQUIRE(g.has_node("alice"));
    REQUIRE(g.has_node("bob"));
    const Channel& c = g.channel("c0");
    CHECK(c.capacity_sat == 50'001);
    CHECK(c.balance1_msat == 25'000'500);
    CHECK(c.balance1_msat + c.balance2_msat == 50'001 * kMsatPerSat);
}

TEST_CASE("load_snapshot names the first offending record") {
    CHECK_THROWS_AS(load_snapshot(nlohmann::json::array()), ParseError);
    nlohmann::json dup = {{"nodes", {{{"pub_key", "a"}}, {{"pub_key", "a"}}}}};
    CHECK_THROWS_WITH(load_snapshot(dup), Catch::Matchers::ContainsSubstring("a"));
    nlohmann::json dangling = {
        {"nodes", {{{"pub_key", "a"}}}},
        {"edges",
         {{{"channel_id", "cX"}, {"node1_pub", "a"}, {"node2_pub", "ghost"}, {"capacity", 1}}}}};
    CHECK_THROWS_WITH(load_snapshot(dangling), Catch::Matchers::ContainsSubstring("cX"));
    CHECK_THROWS_AS(load_snapshot_text("{nope"), ParseError);
}

TEST_CASE("node and channel lookups report unknown ids") {
    ChannelGraph g;
    CHECK_THROWS_AS(g.node("nope"), NotFoundError);
    CHECK_THROWS_AS(g.channel("nope"), NotFoundError);
    g.add_node("a");
    CHECK_THROWS_AS(g.add_node("a"), SimError);
}
