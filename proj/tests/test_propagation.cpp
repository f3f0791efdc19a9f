#include <catch2/catch_amalgamated.hpp>

#include "lnsim/propagation.hpp"

using namespace lnsim;

namespace {

struct Formed {
    Engine engine;
    LogicalTopology topology;
    std::size_t n;

    explicit Formed(std::uint64_t seed, std::size_t n_, std::size_t m) : engine(seed), n(n_) {
        PolicyK policy = derive_capacities("xi-" + std::to_string(seed), 12);
        engine.graph = make_synthetic_innocent_graph(25, 40, seed, &policy);
        FormationParams params;
        params.m = m;
        Formation formation(engine, params, policy);
        std::vector<SimTime> arrivals;
        for (std::size_t i = 0; i < n; ++i) arrivals.push_back((i + 1) * 1000);
        formation.form_network(arrivals);
        topology = formation.topology();
    }
};

}  // namespace

TEST_CASE("predicted_messages evaluates the depth formula") {
    ComplexityEstimate e = predicted_messages(3, 27);
    CHECK(e.predicted_depth_messages == Catch::Approx(9.0));
    CHECK(e.depth == 3);
    CHECK(predicted_messages(2, 16).depth == 4);
    CHECK(predicted_messages(10, 10).depth == 1);
    CHECK_THROWS_AS(predicted_messages(1, 10), SimError);
    CHECK_THROWS_AS(predicted_messages(3, 2), SimError);
}

TEST_CASE("flood executes every server exactly once") {
    Formed f(21, 20, 3);
    CommandInstance cmd{"c1", "noop", "botmaster", Scheme::noise};
    PropagationReport rep = flood_p2p(f.engine, f.topology, "cnc1", cmd);
    CHECK(rep.first_receipt_ms.size() == f.n);
    for (auto& [node, execs] : rep.executions) CHECK(execs == 1);
    CHECK(rep.messages_sent >= f.n - 1);
    CHECK(rep.ignored_unknown_sender == 0);
    CHECK(rep.total_time_ms > 0);
    // duplicates are counted, never re-executed
    CHECK(rep.duplicate_receipts == rep.messages_sent - rep.first_receipt_ms.size() -
                                        rep.ignored_unknown_sender);
}

TEST_CASE("flood reaches everyone regardless of the starting server") {
    for (const char* start : {"cnc1", "cnc5", "cnc10"}) {
        Formed f(22, 10, 3);
        CommandInstance cmd{"c2", "noop", "botmaster", Scheme::noise};
        PropagationReport rep = flood_p2p(f.engine, f.topology, start, cmd);
        INFO("start " << start);
        CHECK(rep.first_receipt_ms.size() == f.n);
    }
}

TEST_CASE("flood is deterministic under a fixed seed") {
    auto run = [] {
        Formed f(23, 15, 3);
        CommandInstance cmd{"c3", "noop", "botmaster", Scheme::noise};
        return flood_p2p(f.engine, f.topology, "cnc1", cmd).first_receipt_ms;
    };
    CHECK(run() == run());
}

TEST_CASE("flood rejects an unknown starting node") {
    Formed f(24, 5, 2);
    CommandInstance cmd{"c4", "noop", "botmaster", Scheme::noise};
    CHECK_THROWS_AS(flood_p2p(f.engine, f.topology, "ghost", cmd), NotFoundError);
}

TEST_CASE("per-edge flood delay stays inside the 5-7 hop envelope") {
    Rng rng(25, "t");
    FloodTiming timing;
    for (int i = 0; i < 500; ++i) {
        SimTime d = timing.sample(rng);
        CHECK(d >= 5 * 400);
        CHECK(d <= 7 * 500);
    }
}

TEST_CASE("sequential broadcast sums per-server command durations") {
    Engine e(26);
    e.latency = LatencyModel::fixed(2000);
    e.graph.add_node("bm", "bm", 1'000'000'000, Role::botmaster);
    std::vector<NodeId> cncs;
    for (int i = 1; i <= 10; ++i) {
        NodeId id = "cnc" + std::to_string(i);
        e.graph.add_node(id, id, 0, Role::cnc);
        e.graph.open_channel("bm", id, 1'000'000, false);
        cncs.push_back(id);
    }
    PropagationReport rep = broadcast_sequential(e, "bm", cncs, "noop", Scheme::noise);
    CHECK(rep.first_receipt_ms.size() == 10);
    CHECK(rep.total_time_ms == 10 * 2000);
    CHECK(rep.messages_sent == 10);
    CHECK(rep.edge_failures == 0);
    // offline server counts as an edge failure, the rest still go through
    e.graph.node("cnc5").online = false;
    PropagationReport rep2 = broadcast_sequential(e, "bm", cncs, "noop", Scheme::noise);
    CHECK(rep2.edge_failures == 1);
    CHECK(rep2.first_receipt_ms.size() == 9);
}

TEST_CASE("flood ignores messages from outside the neighbor database") {
    Formed f(27, 8, 3);
    // an impostor C&C that nobody registered: present in the logical map the
    // attacker hands in, absent from every neighbor list
    LogicalTopology tampered = f.topology;
    CncNeighbors nb;
    for (auto& [node, x] : f.topology.nodes) nb.newer.push_back(node);
    f.engine.graph.add_node("impostor", "impostor", 0, Role::bot_observer);
    tampered.nodes["impostor"] = nb;
    CommandInstance cmd{"c5", "noop", "botmaster", Scheme::noise};
    PropagationReport rep = flood_p2p(f.engine, tampered, "impostor", cmd);
    // the impostor executes (it injected the command) but every forward it
    // sends is dropped at authentication
    CHECK(rep.first_receipt_ms.size() == 1);
    CHECK(rep.ignored_unknown_sender == f.topology.nodes.size());
}

TEST_CASE("measured propagation grows with network size") {
    auto rows = measure_propagation(31, {5, 10}, 3, 3);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].n == 5);
    CHECK(rows[1].n == 10);
    CHECK(rows[0].mean_total_s > 0.0);
    CHECK(rows[1].mean_total_s > rows[0].mean_total_s);
}
