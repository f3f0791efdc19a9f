#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lnsim/covert_codec.hpp"
#include "lnsim/formation.hpp"

namespace lnsim {

struct CommandInstance {
    std::string command_id;
    std::string body;
    NodeId origin;
    Scheme scheme = Scheme::noise;
};

struct PropagationReport {
    std::map<NodeId, SimTime> first_receipt_ms;
    std::map<NodeId, int> executions;
    SimTime total_time_ms = 0;  // max first receipt minus start
    std::size_t messages_sent = 0;
    std::size_t duplicate_receipts = 0;
    std::size_t ignored_unknown_sender = 0;
    std::size_t edge_failures = 0;
    std::size_t observed_depth = 0;  // logical hops from the injection point

    double total_time_s() const { return to_seconds(total_time_ms); }

    std::string csv() const {
        std::ostringstream os;
        os << "cnc_id,first_receipt_s,duplicates_total\n";
        for (auto& [n, t] : first_receipt_ms)
            os << n << ',' << to_seconds(t) << ',' << duplicate_receipts << '\n';
        return os.str();
    }
};

struct ComplexityEstimate {
    std::size_t m = 0;
    std::size_t n = 0;
    double predicted_depth_messages = 0.0;
    std::size_t depth = 0;  // smallest d with m^d >= n
};

inline ComplexityEstimate predicted_messages(std::size_t m, std::size_t n) {
    if (m < 2) throw SimError("predicted_messages: m must be >= 2 (m=1 and m=n are O(n))");
    if (n < m) throw SimError("predicted_messages: n must be >= m");
    ComplexityEstimate e;
    e.m = m;
    e.n = n;
    double logmn = std::log(static_cast<double>(n)) / std::log(static_cast<double>(m));
    e.predicted_depth_messages = static_cast<double>(m) + static_cast<double>(m) * (logmn - 1.0);
    std::size_t d = 0;
    double pow = 1;
    while (pow < static_cast<double>(n)) {
        pow *= static_cast<double>(m);
        ++d;
    }
    e.depth = d;
    return e;
}

// One-to-many dissemination: the botmaster messages each C&C strictly
// sequentially; per-C&C failures are recorded and the rest still attempted.
inline PropagationReport broadcast_sequential(
    Engine& engine, const NodeId& botmaster, const std::vector<NodeId>& cnc_list,
    const std::string& command, Scheme scheme, const SendPolicy& policy = {},
    const std::map<NodeId, std::vector<RoutingHint>>& hints = {},
    const Codebook& cb = Codebook::canonical()) {
    PropagationReport rep;
    SimTime start = engine.now();
    SimTime reported_total = 0;
    for (auto& cnc : cnc_list) {
        std::vector<RoutingHint> h;
        if (auto it = hints.find(cnc); it != hints.end()) h = it->second;
        try {
            SendReport sr = scheme == Scheme::noise
                                ? send_command_noise(engine, botmaster, cnc, command, h)
                                : send_command(engine, botmaster, cnc, command, scheme, policy, h, cb);
            if (sr.payments == 0 && scheme == Scheme::noise) {
                rep.edge_failures++;
                continue;
            }
            reported_total += sr.duration_ms;
            rep.first_receipt_ms[cnc] = engine.now() - start;
            rep.executions[cnc] = 1;
            rep.messages_sent += sr.payments + sr.sentinel_payments;
        } catch (const AbandonedCommandError&) {
            rep.edge_failures++;
        }
    }
    rep.total_time_ms = reported_total;
    return rep;
}

// Per-message delay of a flood edge: a 5-to-7-hop route at 0.4-0.5 s/hop.
struct FloodTiming {
    int hops_lo = 5;
    int hops_hi = 7;
    SimTime hop_lo_ms = 400;
    SimTime hop_hi_ms = 500;

    SimTime sample(Rng& rng) const {
        int hops = static_cast<int>(rng.uniform_int(hops_lo, hops_hi));
        SimTime t = 0;
        for (int i = 0; i < hops; ++i) t += rng.uniform_int(hop_lo_ms, hop_hi_ms);
        return t;
    }
};

// P2P flood over the logical digraph. Upon first authenticated receipt a
// C&C forwards the command once to every neighbor, one in-flight send at a
// time: newly joined neighbors in seeded-random order first, then the older
// ones. Later receipts of the same command_id are counted, not re-executed.
inline PropagationReport flood_p2p(Engine& engine, const LogicalTopology& topology,
                                   const NodeId& start_cnc, const CommandInstance& command,
                                   const FloodTiming& timing = {}) {
    if (!topology.contains(start_cnc))
        throw NotFoundError("flood_p2p: " + start_cnc + " is not a C&C in the topology");
    PropagationReport rep;
    Rng rng = engine.rng.split("flood-" + command.command_id);
    SimTime start = engine.now();

    std::map<NodeId, std::size_t> depth;

    struct Delivery {
        NodeId to;
        AttachedMessage msg;
        std::size_t depth;
        bool trusted_injection;
    };

    std::function<void(const Delivery&)> deliver = [&](const Delivery& d) {
        if (!topology.contains(d.to)) return;  // false C&C: message wasted
        const CncNeighbors& nb = topology.nodes.at(d.to);
        if (!d.trusted_injection) {
            NodeId sender;
            try {
                sender = recover_sender(engine.graph, d.msg);
            } catch (const AuthenticationError&) {
                rep.ignored_unknown_sender++;
                return;
            }
            if (sender == kUnknownSender || !nb.contains(sender)) {
                rep.ignored_unknown_sender++;
                return;
            }
        }
        engine.receipts[d.to].push_back({engine.now(), 0, d.msg});
        if (rep.first_receipt_ms.count(d.to)) {
            rep.duplicate_receipts++;
            return;
        }
        rep.first_receipt_ms[d.to] = engine.now() - start;
        rep.executions[d.to] = 1;
        depth[d.to] = d.depth;

        // forward once to every neighbor, sequentially
        std::vector<NodeId> order = nb.newer;
        std::shuffle(order.begin(), order.end(), rng.engine());
        order.insert(order.end(), nb.older.begin(), nb.older.end());
        SimTime t = engine.now();
        for (auto& peer : order) {
            t += timing.sample(rng);
            rep.messages_sent++;
            AttachedMessage m =
                make_attached_message(d.to, command.body, t, command.command_id);
            engine.clock.schedule(t, [&, peer, m, nd = d.depth + 1]() {
                deliver({peer, m, nd, false});
            });
        }
    };

    // the injection from the operator is accepted by construction
    SimTime t0 = start + timing.sample(rng);
    AttachedMessage first =
        make_attached_message(command.origin, command.body, t0, command.command_id);
    rep.messages_sent++;
    engine.clock.schedule(t0, [&]() { deliver({start_cnc, first, 0, true}); });
    engine.clock.run_to_completion();

    SimTime max_t = 0;
    for (auto& [n, t] : rep.first_receipt_ms) max_t = std::max(max_t, t);
    rep.total_time_ms = max_t;
    for (auto& [n, d] : depth) rep.observed_depth = std::max(rep.observed_depth, d);
    return rep;
}

struct PropagationRow {
    std::size_t n = 0;
    double mean_total_s = 0.0;
};

// Table-style measurement: forms a D-LNBot of n servers over a synthetic
// base graph, floods a command from the first server, and averages the
// total propagation time over seeded trials.
inline std::vector<PropagationRow> measure_propagation(
    std::uint64_t seed, const std::vector<std::size_t>& ns, std::size_t m = 3,
    std::size_t trials = 30, const FloodTiming& timing = {}) {
    std::vector<PropagationRow> rows;
    for (std::size_t n : ns) {
        double sum = 0.0;
        for (std::size_t trial = 0; trial < trials; ++trial) {
            std::uint64_t trial_seed = seed * 1'000'003 + n * 101 + trial;
            Engine engine(trial_seed);
            PolicyK policy = derive_capacities("xi-" + std::to_string(seed), 16);
            engine.graph = make_synthetic_innocent_graph(40, 80, trial_seed, &policy);
            FormationParams params;
            params.m = m;
            params.h = 10;
            Formation formation(engine, params, policy);
            std::vector<SimTime> arrivals;
            for (std::size_t i = 0; i < n; ++i)
                arrivals.push_back(static_cast<SimTime>(i + 1) * 60'000);
            formation.form_network(arrivals);
            CommandInstance cmd{"cmd-" + std::to_string(trial), "noop", "botmaster",
                                Scheme::noise};
            PropagationReport rep =
                flood_p2p(engine, formation.topology(), "cnc1", cmd, timing);
            sum += rep.total_time_s();
        }
        rows.push_back({n, sum / static_cast<double>(trials)});
    }
    return rows;
}

}  // namespace lnsim
