#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lnsim/payments.hpp"

namespace lnsim {

// Shared capacity predicate f(K)=xi. The default is a digest congruence so
// every party derives the identical capacity set exactly; a sin() variant
// with a tolerance band exists behind its own policy id.
struct PolicyK {
    std::string f_id = "digest";
    std::string xi = "0";
    std::uint64_t modulus = 1000;  // digest policy: digest(K|xi) % modulus == 0
    Sat floor_sat = 20'000;
    double sin_target = 0.0;  // sin policy
    double sin_eps = 1e-9;
    std::vector<Sat> valid_capacities;

    bool member(Sat capacity) const {
        if (capacity < floor_sat) return false;
        if (f_id == "digest")
            return fnv1a64(std::to_string(capacity) + "|" + xi) % modulus == 0;
        if (f_id == "sin")
            return std::fabs(std::sin(static_cast<double>(capacity)) - sin_target) <= sin_eps;
        throw SimError("unknown policy id " + f_id);
    }
};

// Deterministic: same (seed, n) always yields the same ordered capacity list.
inline PolicyK derive_capacities(const std::string& policy_seed, std::size_t n,
                                 std::uint64_t modulus = 1000, Sat floor_sat = 20'000,
                                 const std::string& f_id = "digest") {
    if (n < 1) throw SimError("derive_capacities: n must be >= 1");
    PolicyK p;
    p.f_id = f_id;
    p.xi = policy_seed;
    p.modulus = modulus;
    p.floor_sat = floor_sat;
    Sat k = floor_sat;
    const Sat scan_cap = floor_sat + static_cast<Sat>(modulus) * static_cast<Sat>(n) * 1000;
    while (p.valid_capacities.size() < n) {
        if (p.member(k)) p.valid_capacities.push_back(k);
        if (++k > scan_cap)
            throw SimError("derive_capacities: scan exhausted before finding " +
                           std::to_string(n) + " capacities");
    }
    return p;
}

inline bool infection_gate(Rng& rng, double p) {
    if (p < 0.0 || p > 1.0) throw SimError("infection_gate: p outside [0,1]");
    return rng.bernoulli(p);
}

struct FormationParams {
    std::size_t h = 10;       // innocent-candidate pool size
    std::size_t m = 2;        // active C&C window
    double infection_p = 0.3;
    int retry_open_max = 3;
    Sat funding_wallet_sat = 200'000;
    Sat ordinary_capacity_sat = 20'000;

    void validate() const {
        if (m < 1) throw ConfigError("formation: m must be >= 1");
        if (h < 1) throw ConfigError("formation: h must be >= 1");
        if (infection_p <= 0.0 || infection_p >= 0.5)
            throw ConfigError("formation: infection probability must be in (0, 0.5)");
    }
};

struct NeighborRecord {
    NodeId id;
    SimTime discovered_at = 0;
    bool newer = false;  // registered via announcement rather than join scan
};

struct CncState {
    NodeId node;
    std::vector<std::string> innocent_channels;  // open policy-valid channels
    std::vector<NeighborRecord> neighbors;       // insertion-ordered, no self, no dups
    std::size_t newcomer_counter = 0;
    bool active = true;
    bool bootstrap = false;
    SimTime joined_at = 0;
    std::size_t false_cnc_registrations = 0;  // innocent channels that matched the policy

    bool knows(const NodeId& n) const {
        for (auto& r : neighbors)
            if (r.id == n) return true;
        return false;
    }
    std::vector<NodeId> older_neighbors() const {
        std::vector<NodeId> out;
        for (auto& r : neighbors)
            if (!r.newer) out.push_back(r.id);
        return out;
    }
    std::vector<NodeId> newer_neighbors() const {
        std::vector<NodeId> out;
        for (auto& r : neighbors)
            if (r.newer) out.push_back(r.id);
        return out;
    }
};

struct LogicalEdge {
    NodeId from;
    NodeId to;
    SimTime discovered_at = 0;
};

// Per-C&C neighbor database split by how the peer was learned, preserving
// registration order. This is the graph command propagation runs over.
struct CncNeighbors {
    std::vector<NodeId> older;
    std::vector<NodeId> newer;

    std::vector<NodeId> all() const {
        std::vector<NodeId> out = older;
        out.insert(out.end(), newer.begin(), newer.end());
        return out;
    }
    bool contains(const NodeId& n) const {
        for (auto& x : older)
            if (x == n) return true;
        for (auto& x : newer)
            if (x == n) return true;
        return false;
    }
};

struct LogicalTopology {
    std::map<NodeId, CncNeighbors> nodes;

    bool contains(const NodeId& n) const { return nodes.count(n) > 0; }

    // C&Cs reachable from `start` over undirected logical links
    std::set<NodeId> reachable_from(const NodeId& start) const {
        std::map<NodeId, std::set<NodeId>> adj;
        for (auto& [n, nb] : nodes)
            for (auto& p : nb.all())
                if (nodes.count(p)) {
                    adj[n].insert(p);
                    adj[p].insert(n);
                }
        std::set<NodeId> seen;
        std::vector<NodeId> stack{start};
        while (!stack.empty()) {
            NodeId n = stack.back();
            stack.pop_back();
            if (!seen.insert(n).second) continue;
            for (auto& p : adj[n]) stack.push_back(p);
        }
        return seen;
    }
};

// Newcomer-side announcement handler: register policy-matching openers until
// the window fills, then withdraw the own rendezvous channel.
inline void on_new_channel(Engine& engine, CncState& state, const Channel& channel,
                           const PolicyK& policy, std::size_t m) {
    if (channel.is_private || !policy.member(channel.capacity_sat)) return;
    const NodeId& opener = channel.node1;  // funder announced the channel
    if (opener == state.node || state.knows(opener)) return;
    if (state.newcomer_counter < m) {
        state.neighbors.push_back({opener, engine.now(), true});
        state.newcomer_counter++;
        if (engine.graph.node(opener).role != Role::cnc) state.false_cnc_registrations++;
        if (state.newcomer_counter == m) {
            for (auto& cid : state.innocent_channels)
                if (engine.graph.channel(cid).is_open())
                    engine.graph.close_channel(cid, state.node, engine.now());
            state.innocent_channels.clear();
        }
    }
}

// Runs Alg-2-style joins against an engine and keeps the per-C&C states
// alive for the announcement callbacks they install.
class Formation {
  public:
    Formation(Engine& engine, FormationParams params, PolicyK policy)
        : engine_(engine), params_(std::move(params)), policy_(std::move(policy)),
          join_rng_(engine.rng.split("formation")) {
        params_.validate();
    }

    // Capacity-policy rendezvous: scan for discoverable servers, then open
    // the own policy channel plus one ordinary routing channel.
    CncState& join_as_cnc(const NodeId& node) {
        std::size_t public_nodes = 0;
        for (auto& [nid, n] : engine_.graph.nodes)
            if (n.role == Role::innocent) public_nodes++;
        if (public_nodes < params_.h)
            throw ConfigError("formation: snapshot has fewer than h public nodes");

        auto state = std::make_unique<CncState>();
        CncState& st = *state;
        st.node = node;
        st.joined_at = engine_.now();

        scan_existing(st);

        int opens = 0;
        open_policy_channel(st);
        open_ordinary_channel(st);
        opens++;
        while (st.older_neighbors().size() < 2 && opens <= params_.retry_open_max) {
            scan_existing(st);
            if (st.older_neighbors().size() >= 2) break;
            open_policy_channel(st);
            opens++;
        }
        if (st.older_neighbors().size() < 2) st.bootstrap = true;

        CncState* raw = state.get();
        engine_.graph.on_public_open([this, raw](const Channel& c) {
            on_new_channel(engine_, *raw, c, policy_, params_.m);
        });
        states_.push_back(std::move(state));
        by_node_[node] = raw;
        return *raw;
    }

    // Replays joins over the base snapshot at the given arrival times.
    void form_network(const std::vector<SimTime>& arrival_schedule) {
        SimTime prev = -1;
        for (SimTime t : arrival_schedule) {
            if (t <= prev) throw ConfigError("formation: arrival times must strictly increase");
            prev = t;
        }
        for (std::size_t i = 0; i < arrival_schedule.size(); ++i) {
            engine_.clock.sleep_until(arrival_schedule[i]);
            NodeId id = "cnc" + std::to_string(i + 1);
            engine_.graph.add_node(id, id, params_.funding_wallet_sat, Role::cnc);
            join_as_cnc(id);
        }
    }

    const std::vector<std::unique_ptr<CncState>>& states() const { return states_; }

    CncState& state_of(const NodeId& n) {
        auto it = by_node_.find(n);
        if (it == by_node_.end()) throw NotFoundError("no C&C state for " + n);
        return *it->second;
    }

    LogicalTopology topology() const {
        LogicalTopology t;
        for (auto& s : states_) {
            CncNeighbors nb;
            for (auto& r : s->neighbors)
                (r.newer ? nb.newer : nb.older).push_back(r.id);
            t.nodes[s->node] = std::move(nb);
        }
        return t;
    }

    std::vector<LogicalEdge> logical_edges() const {
        std::vector<LogicalEdge> out;
        for (auto& s : states_)
            for (auto& r : s->neighbors) out.push_back({s->node, r.id, r.discovered_at});
        return out;
    }

    // Undirected connectivity of the logical graph over real C&C nodes.
    bool logically_connected() const {
        if (states_.size() <= 1) return true;
        std::map<NodeId, std::vector<NodeId>> adj;
        for (auto& s : states_) adj[s->node];
        for (auto& s : states_)
            for (auto& r : s->neighbors)
                if (adj.count(r.id)) {
                    adj[s->node].push_back(r.id);
                    adj[r.id].push_back(s->node);
                }
        std::set<NodeId> seen;
        std::vector<NodeId> stack{states_.front()->node};
        while (!stack.empty()) {
            NodeId n = stack.back();
            stack.pop_back();
            if (!seen.insert(n).second) continue;
            for (auto& p : adj[n]) stack.push_back(p);
        }
        return seen.size() == adj.size();
    }

    // Number of C&Cs currently holding an open policy-valid channel.
    std::size_t discoverable_count() const {
        std::size_t c = 0;
        for (auto& s : states_) {
            bool open = false;
            for (auto& cid : s->innocent_channels)
                if (engine_.graph.channel(cid).is_open()) open = true;
            if (open) c++;
        }
        return c;
    }

    const PolicyK& policy() const { return policy_; }
    const FormationParams& params() const { return params_; }

  private:
    void scan_existing(CncState& st) {
        // ledger order keeps the scan deterministic
        for (auto& ev : engine_.graph.ledger) {
            if (ev.kind != OnChainEvent::Kind::open) continue;
            const Channel& c = engine_.graph.channel(ev.chan_id);
            if (!c.is_open() || c.is_private) continue;
            if (!policy_.member(c.capacity_sat)) continue;
            const NodeId& owner = c.node1;
            if (owner == st.node || st.knows(owner)) continue;
            st.neighbors.push_back({owner, engine_.now(), false});
            if (engine_.graph.node(owner).role != Role::cnc) st.false_cnc_registrations++;
        }
    }

    void open_policy_channel(CncState& st) {
        auto pool = engine_.graph.most_connected(params_.h);
        // drop C&C nodes from the candidate pool; the anchor must be innocent
        std::vector<NodeId> innocents;
        for (auto& n : pool)
            if (engine_.graph.node(n).role == Role::innocent) innocents.push_back(n);
        if (innocents.empty()) throw ConfigError("formation: no innocent anchor available");
        const NodeId& target =
            innocents[static_cast<std::size_t>(join_rng_.uniform_int(0, innocents.size() - 1))];
        Sat cap = policy_.valid_capacities.empty()
                      ? policy_.floor_sat
                      : policy_.valid_capacities[static_cast<std::size_t>(join_rng_.uniform_int(
                            0, policy_.valid_capacities.size() - 1))];
        std::string cid =
            engine_.graph.open_channel(st.node, target, cap, /*is_private=*/false, {}, engine_.now());
        st.innocent_channels.push_back(cid);
    }

    // Extra routing channel so the server stays reachable after the
    // rendezvous channel closes. Capacity is nudged off-policy.
    void open_ordinary_channel(CncState& st) {
        std::vector<NodeId> candidates;
        for (auto& [nid, n] : engine_.graph.nodes)
            if (nid != st.node && n.role == Role::innocent) candidates.push_back(nid);
        if (candidates.empty()) return;
        const NodeId& target =
            candidates[static_cast<std::size_t>(join_rng_.uniform_int(0, candidates.size() - 1))];
        Sat cap = params_.ordinary_capacity_sat;
        while (policy_.member(cap)) ++cap;
        engine_.graph.open_channel(st.node, target, cap, /*is_private=*/false, {}, engine_.now());
    }

    Engine& engine_;
    FormationParams params_;
    PolicyK policy_;
    Rng join_rng_;
    std::vector<std::unique_ptr<CncState>> states_;
    std::map<NodeId, CncState*> by_node_;
};

// Synthetic innocent base graph for formation experiments: a loosely meshed
// public network whose capacities avoid the given policy so rendezvous
// channels stand out (collisions can be forced via `collision_rate`).
inline ChannelGraph make_synthetic_innocent_graph(std::size_t node_count,
                                                  std::size_t extra_channels,
                                                  std::uint64_t seed,
                                                  const PolicyK* avoid_policy = nullptr,
                                                  double collision_rate = 0.0) {
    if (node_count < 2) throw ConfigError("synthetic graph needs at least 2 nodes");
    ChannelGraph g;
    Rng rng(seed, "synthetic-graph");
    for (std::size_t i = 0; i < node_count; ++i) {
        std::string id = "inn" + std::string(4 - std::to_string(i).size(), '0') + std::to_string(i);
        g.add_node(id, id, 1'000'000'000, Role::innocent);
    }
    std::vector<NodeId> ids;
    for (auto& [nid, n] : g.nodes) ids.push_back(nid);
    auto pick_cap = [&]() {
        Sat cap = rng.uniform_int(g.capacity_floor_sat, 2'000'000);
        if (avoid_policy) {
            if (collision_rate > 0.0 && rng.bernoulli(collision_rate) &&
                !avoid_policy->valid_capacities.empty()) {
                return avoid_policy->valid_capacities.front();
            }
            while (avoid_policy->member(cap)) ++cap;
        }
        return cap;
    };
    // spanning chain first, then random extra channels
    for (std::size_t i = 1; i < ids.size(); ++i)
        g.open_channel(ids[i - 1], ids[i], pick_cap(), false);
    for (std::size_t e = 0; e < extra_channels; ++e) {
        std::size_t a = static_cast<std::size_t>(rng.uniform_int(0, ids.size() - 1));
        std::size_t b = static_cast<std::size_t>(rng.uniform_int(0, ids.size() - 1));
        if (a == b) continue;
        g.open_channel(ids[a], ids[b], pick_cap(), false);
    }
    // base announcements are history by the time formation starts
    g.announcements.clear();
    return g;
}

}  // namespace lnsim
