#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lnsim/topology.hpp"

namespace lnsim {

struct RouteHop {
    std::string chan_id;
    NodeId from;
    NodeId to;
    Msat amt_to_forward_msat = 0;  // amount delivered to `to`
    Msat fee_msat = 0;             // fee charged by `from` for forwarding onto this channel
    int timelock_delta = 40;
};

struct Route {
    std::vector<RouteHop> hops;
    Msat total_fee_msat = 0;
    Msat total_amt_msat = 0;  // amount + fees, what the sender spends

    std::size_t hop_count() const { return hops.size(); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["total_fee_msat"] = total_fee_msat;
        j["total_amt_msat"] = total_amt_msat;
        j["hops"] = nlohmann::json::array();
        for (auto& h : hops)
            j["hops"].push_back({{"chan_id", h.chan_id},
                                 {"from", h.from},
                                 {"to", h.to},
                                 {"amt_to_forward_msat", h.amt_to_forward_msat},
                                 {"fee_msat", h.fee_msat}});
        return j;
    }
};

// Lets a sender route into a private channel whose far endpoint is hidden.
struct RoutingHint {
    NodeId hidden_node;
    NodeId entry_peer;
    std::string chan_id;
    FeePolicy fee;
};

enum class FeeModelKind { per_channel_default, fixed_per_payment };

struct FeeModel {
    FeeModelKind kind = FeeModelKind::per_channel_default;
    Sat fixed_fee_sat = 0;

    static FeeModel per_channel() { return {FeeModelKind::per_channel_default, 0}; }
    static FeeModel fixed(Sat fee_sat) { return {FeeModelKind::fixed_per_payment, fee_sat}; }
};

struct RouteConstraints {
    std::optional<std::size_t> max_hops;
    std::optional<Msat> max_fee_msat;
};

inline Msat compute_fee(const FeePolicy& policy, Msat amount_msat) {
    if (amount_msat <= 0) throw SimError("compute_fee: amount must be positive");
    return policy.base_fee_msat + amount_msat * policy.prop_fee_ppm / 1'000'000;
}

inline Msat compute_fee(const Channel& ch, Msat amount_msat) {
    return compute_fee(ch.fee, amount_msat);
}

namespace detail {

struct SearchEdge {
    std::string chan_id;
    NodeId peer;       // node reached by traversing the edge
    FeePolicy fee;
    Msat liquidity;    // spendable toward peer
};

// Adjacency over open public channels plus any private channel referenced
// by a hint. Keyed by the node the payment leaves from.
inline std::map<NodeId, std::vector<SearchEdge>> build_adjacency(
    const ChannelGraph& g, const std::vector<RoutingHint>& hints) {
    std::map<NodeId, std::vector<SearchEdge>> adj;
    std::set<std::string> hinted;
    for (auto& h : hints) hinted.insert(h.chan_id);
    for (auto& [cid, c] : g.channels) {
        if (!c.is_open()) continue;
        if (c.is_private && !hinted.count(cid)) continue;
        adj[c.node1].push_back({cid, c.node2, c.fee, c.balance1_msat});
        adj[c.node2].push_back({cid, c.node1, c.fee, c.balance2_msat});
    }
    return adj;
}

}  // namespace detail

// Minimum-cost source route: total fees first, hop count as tie-break, then
// lexicographic node path. Liquidity is checked against current directional
// balances. Hints extend the searchable graph into private channels.
inline Route find_route(const ChannelGraph& g, const NodeId& src, const NodeId& dst,
                        Msat amount_msat, const std::vector<RoutingHint>& hints = {},
                        const RouteConstraints& constraints = {},
                        const FeeModel& fee_model = FeeModel::per_channel()) {
    if (src == dst) throw SimError("find_route: src == dst");
    if (amount_msat <= 0) throw SimError("find_route: amount must be positive");
    g.node(src);
    g.node(dst);

    const bool fixed = fee_model.kind == FeeModelKind::fixed_per_payment;
    auto adj = detail::build_adjacency(g, hints);
    // reverse adjacency: for each node, the (upstream, edge) pairs leading into it
    std::map<NodeId, std::vector<std::pair<NodeId, detail::SearchEdge>>> radj;
    for (auto& [u, edges] : adj)
        for (auto& e : edges) radj[e.peer].emplace_back(u, e);

    // Reverse search from dst: state tracks the msat that must arrive at a
    // node so that dst ultimately receives amount_msat.
    struct State {
        Msat fee;               // fees accumulated downstream of `node`
        std::size_t hops;
        std::vector<NodeId> path;  // forward order, node..dst
        NodeId node;
        Msat amt_in;            // msat that must be delivered to `node`
        std::vector<RouteHop> hops_fwd;
        bool operator>(const State& o) const {
            if (fee != o.fee) return fee > o.fee;
            if (hops != o.hops) return hops > o.hops;
            return path > o.path;
        }
    };
    std::priority_queue<State, std::vector<State>, std::greater<State>> pq;
    pq.push({0, 0, {dst}, dst, amount_msat, {}});
    std::set<NodeId> done;
    bool liquidity_limited = false;
    std::string bottleneck;

    while (!pq.empty()) {
        State st = pq.top();
        pq.pop();
        if (done.count(st.node)) continue;
        done.insert(st.node);

        if (st.node == src) {
            Route r;
            r.hops = st.hops_fwd;
            if (fixed) {
                // route-level fee regardless of hop count; direct channels
                // have no forwarder to collect it, so they stay free
                r.total_fee_msat =
                    r.hops.size() >= 2 ? fee_model.fixed_fee_sat * kMsatPerSat : 0;
                for (auto& h : r.hops) {
                    h.amt_to_forward_msat = amount_msat;
                    h.fee_msat = 0;
                }
                r.hops.front().fee_msat = r.total_fee_msat;
            } else {
                r.total_fee_msat = st.fee;
            }
            r.total_amt_msat = amount_msat + r.total_fee_msat;
            if (constraints.max_fee_msat && r.total_fee_msat > *constraints.max_fee_msat)
                throw ConstraintError("find_route: cheapest route fee " +
                                      std::to_string(r.total_fee_msat) + " msat exceeds cap");
            return r;
        }
        if (constraints.max_hops && st.hops >= *constraints.max_hops) continue;

        // expand upstream: u -> st.node over each channel incident to st.node
        auto rit = radj.find(st.node);
        if (rit == radj.end()) continue;
        for (auto& [u, e] : rit->second) {
            if (done.count(u)) continue;
            {
                if (e.liquidity < st.amt_in) {
                    liquidity_limited = true;
                    bottleneck = e.chan_id;
                    continue;
                }
                Msat hop_fee = 0;
                if (!fixed && u != src) hop_fee = compute_fee(e.fee, st.amt_in);
                State nx;
                nx.fee = st.fee + hop_fee;
                nx.hops = st.hops + 1;
                nx.path = st.path;
                nx.path.insert(nx.path.begin(), u);
                nx.node = u;
                nx.amt_in = st.amt_in + hop_fee;
                nx.hops_fwd = st.hops_fwd;
                RouteHop h;
                h.chan_id = e.chan_id;
                h.from = u;
                h.to = st.node;
                h.amt_to_forward_msat = st.amt_in;
                h.fee_msat = hop_fee;
                nx.hops_fwd.insert(nx.hops_fwd.begin(), h);
                pq.push(std::move(nx));
            }
        }
    }
    if (constraints.max_hops && !liquidity_limited)
        throw ConstraintError("find_route: no route from " + src + " to " + dst +
                              " within hop cap");
    std::string why = liquidity_limited
                          ? "insufficient liquidity (bottleneck channel " + bottleneck + ")"
                          : "no connecting channels";
    throw NoRouteError("find_route: no route from " + src + " to " + dst + ": " + why);
}

// Structural onion model: constant reported size, one opaque entry per hop,
// payload readable only through the final-hop accessor.
class OnionPacket {
  public:
    static constexpr std::size_t kPayloadCapacity = 1300;

    OnionPacket(std::size_t hop_count, std::string final_payload)
        : hop_count_(hop_count), final_payload_(std::move(final_payload)) {
        if (final_payload_.size() > kPayloadCapacity)
            throw PayloadTooLargeError("onion payload " + std::to_string(final_payload_.size()) +
                                       " bytes exceeds " + std::to_string(kPayloadCapacity));
    }

    std::size_t hop_count() const { return hop_count_; }
    std::size_t serialized_size() const { return kPayloadCapacity; }

    // Intermediate hops get nothing; only the final hop yields the payload.
    std::optional<std::string> payload_at(std::size_t hop_index) const {
        if (hop_index + 1 != hop_count_) return std::nullopt;
        return final_payload_;
    }

  private:
    std::size_t hop_count_;
    std::string final_payload_;
};

inline OnionPacket build_onion(const Route& route, const std::string& final_payload = "") {
    return OnionPacket(route.hop_count(), final_payload);
}

}  // namespace lnsim
