#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lnsim/core.hpp"

namespace lnsim {

using NodeId = std::string;

enum class Role { innocent, cnc, botmaster, collector, bot_observer };

inline const char* role_name(Role r) {
    switch (r) {
        case Role::innocent: return "innocent";
        case Role::cnc: return "cnc";
        case Role::botmaster: return "botmaster";
        case Role::collector: return "collector";
        case Role::bot_observer: return "bot-observer";
    }
    return "?";
}

struct Node {
    NodeId id;
    std::string pubkey;
    Sat wallet_sat = 0;
    Role role = Role::innocent;
    bool accepts_keysend = true;
    bool online = true;
};

struct FeePolicy {
    Msat base_fee_msat = 1;
    std::int64_t prop_fee_ppm = 1;  // parts-per-million of forwarded amount
};

struct Channel {
    std::string chan_id;
    NodeId node1;
    NodeId node2;
    Sat capacity_sat = 0;
    Msat balance1_msat = 0;  // spendable toward node2
    Msat balance2_msat = 0;  // spendable toward node1
    FeePolicy fee;
    bool is_private = false;
    SimTime open_time = 0;
    std::optional<SimTime> close_time;

    bool is_open() const { return !close_time.has_value(); }

    bool has_endpoint(const NodeId& n) const { return node1 == n || node2 == n; }

    const NodeId& other(const NodeId& n) const {
        if (n == node1) return node2;
        if (n == node2) return node1;
        throw NotFoundError("node " + n + " is not an endpoint of " + chan_id);
    }

    Msat& balance_from(const NodeId& n) {
        if (n == node1) return balance1_msat;
        if (n == node2) return balance2_msat;
        throw NotFoundError("node " + n + " is not an endpoint of " + chan_id);
    }

    Msat balance_from(const NodeId& n) const {
        return const_cast<Channel*>(this)->balance_from(n);
    }
};

struct OnChainEvent {
    enum class Kind { open, close };
    Kind kind;
    std::string chan_id;
    NodeId funder;  // the closer, for close events
    Sat fee_sat = 0;
    SimTime time = 0;
};

struct Settlement {
    Sat to_node1_sat = 0;
    Sat to_node2_sat = 0;
};

// Payment-channel graph plus the simulated on-chain ledger. Single writer:
// all mutations happen on the simulation thread.
class ChannelGraph {
  public:
    using AnnouncementCallback = std::function<void(const Channel&)>;

    // Configurable policy knobs, defaults per the evaluation setup.
    Sat open_fee_sat = 154;
    Sat close_fee_sat = 0;
    Sat capacity_floor_sat = 20'000;

    std::map<NodeId, Node> nodes;
    std::map<std::string, Channel> channels;
    std::vector<OnChainEvent> ledger;
    std::vector<std::string> announcements;  // chan_ids of public opens, in order

    Node& add_node(const NodeId& id, const std::string& pubkey = "",
                   Sat wallet_sat = 0, Role role = Role::innocent) {
        if (nodes.count(id)) throw SimError("duplicate node id " + id);
        Node n;
        n.id = id;
        n.pubkey = pubkey.empty() ? id : pubkey;
        n.wallet_sat = wallet_sat;
        n.role = role;
        auto [it, ok] = nodes.emplace(id, std::move(n));
        (void)ok;
        return it->second;
    }

    Node& node(const NodeId& id) {
        auto it = nodes.find(id);
        if (it == nodes.end()) throw NotFoundError("unknown node " + id);
        return it->second;
    }
    const Node& node(const NodeId& id) const {
        return const_cast<ChannelGraph*>(this)->node(id);
    }
    bool has_node(const NodeId& id) const { return nodes.count(id) > 0; }

    Channel& channel(const std::string& chan_id) {
        auto it = channels.find(chan_id);
        if (it == channels.end()) throw NotFoundError("unknown channel " + chan_id);
        return it->second;
    }
    const Channel& channel(const std::string& chan_id) const {
        return const_cast<ChannelGraph*>(this)->channel(chan_id);
    }

    std::string open_channel(const NodeId& funder, const NodeId& peer,
                             Sat capacity_sat, bool is_private,
                             FeePolicy fee = {}, SimTime now = 0) {
        Node& f = node(funder);
        node(peer);  // existence check
        if (capacity_sat < capacity_floor_sat)
            throw PolicyError("capacity " + std::to_string(capacity_sat) +
                              " below floor " + std::to_string(capacity_floor_sat));
        Sat needed = capacity_sat + open_fee_sat;
        if (f.wallet_sat < needed)
            throw InsufficientFundsError(funder + " wallet " + std::to_string(f.wallet_sat) +
                                         " < " + std::to_string(needed));
        f.wallet_sat -= needed;

        Channel c;
        c.chan_id = "ch" + std::to_string(next_chan_seq_++);
        c.node1 = funder;
        c.node2 = peer;
        c.capacity_sat = capacity_sat;
        c.balance1_msat = capacity_sat * kMsatPerSat;  // funder side holds it all
        c.balance2_msat = 0;
        c.fee = fee;
        c.is_private = is_private;
        c.open_time = now;
        std::string id = c.chan_id;
        channels.emplace(id, std::move(c));
        ledger.push_back({OnChainEvent::Kind::open, id, funder, open_fee_sat, now});
        total_onchain_fees_sat_ += open_fee_sat;
        if (!is_private) {
            announcements.push_back(id);
            // copy callbacks: a handler may register more while running
            auto cbs = announcement_callbacks_;
            for (auto& cb : cbs) cb(channels.at(id));
        }
        return id;
    }

    Settlement close_channel(const std::string& chan_id, const NodeId& closer,
                             SimTime now = 0) {
        Channel& c = channel(chan_id);
        if (!c.is_open()) throw SimError("channel " + chan_id + " already closed");
        if (!c.has_endpoint(closer))
            throw NotFoundError(closer + " is not an endpoint of " + chan_id);
        c.close_time = now;
        Settlement s;
        s.to_node1_sat = c.balance1_msat / kMsatPerSat;
        s.to_node2_sat = c.balance2_msat / kMsatPerSat;
        node(c.node1).wallet_sat += s.to_node1_sat;
        node(c.node2).wallet_sat += s.to_node2_sat;
        // sub-satoshi remainders cannot settle on-chain
        dust_burned_msat_ += c.capacity_sat * kMsatPerSat -
                             (s.to_node1_sat + s.to_node2_sat) * kMsatPerSat;
        if (close_fee_sat > 0) {
            Node& cl = node(closer);
            if (cl.wallet_sat < close_fee_sat)
                throw InsufficientFundsError(closer + " cannot pay close fee");
            cl.wallet_sat -= close_fee_sat;
        }
        ledger.push_back({OnChainEvent::Kind::close, chan_id, closer, close_fee_sat, now});
        total_onchain_fees_sat_ += close_fee_sat;
        return s;
    }

    // Nodes sorted by open public channel count descending, ties broken by
    // lexicographic pubkey; at most h entries.
    std::vector<NodeId> most_connected(std::size_t h) const {
        if (h < 1) throw SimError("most_connected: h must be >= 1");
        std::map<NodeId, std::size_t> degree;
        for (auto& [nid, n] : nodes) degree[nid] = 0;
        for (auto& [cid, c] : channels) {
            if (!c.is_open() || c.is_private) continue;
            degree[c.node1]++;
            degree[c.node2]++;
        }
        std::vector<NodeId> order;
        order.reserve(nodes.size());
        for (auto& [nid, d] : degree) order.push_back(nid);
        std::stable_sort(order.begin(), order.end(), [&](const NodeId& a, const NodeId& b) {
            if (degree.at(a) != degree.at(b)) return degree.at(a) > degree.at(b);
            return nodes.at(a).pubkey < nodes.at(b).pubkey;
        });
        if (order.size() > h) order.resize(h);
        return order;
    }

    // Pull-style subscription: every public open after the subscribe call is
    // delivered exactly once, in open order.
    class Subscription {
      public:
        Subscription(const ChannelGraph& g, std::size_t cursor) : graph_(&g), cursor_(cursor) {}
        std::vector<std::string> poll() {
            std::vector<std::string> out(graph_->announcements.begin() + cursor_,
                                         graph_->announcements.end());
            cursor_ = graph_->announcements.size();
            return out;
        }

      private:
        const ChannelGraph* graph_;
        std::size_t cursor_;
    };

    Subscription subscribe_announcements() const {
        return Subscription(*this, announcements.size());
    }

    // Push-style observer used by formation's channel monitoring.
    void on_public_open(AnnouncementCallback cb) {
        announcement_callbacks_.push_back(std::move(cb));
    }

    Sat total_onchain_fees_sat() const { return total_onchain_fees_sat_; }
    Msat dust_burned_msat() const { return dust_burned_msat_; }

    Sat total_wallet_sat() const {
        Sat s = 0;
        for (auto& [id, n] : nodes) s += n.wallet_sat;
        return s;
    }

    Sat total_locked_sat() const {
        Sat s = 0;
        for (auto& [id, c] : channels)
            if (c.is_open()) s += c.capacity_sat;
        return s;
    }

    std::string ledger_csv() const {
        std::ostringstream os;
        os << "kind,chan_id,funder,fee_sat,time\n";
        for (auto& e : ledger) {
            os << (e.kind == OnChainEvent::Kind::open ? "open" : "close") << ','
               << e.chan_id << ',' << e.funder << ',' << e.fee_sat << ',' << e.time << '\n';
        }
        return os.str();
    }

  private:
    std::uint64_t next_chan_seq_ = 0;
    Sat total_onchain_fees_sat_ = 0;
    Msat dust_burned_msat_ = 0;
    std::vector<AnnouncementCallback> announcement_callbacks_;
};

// Builds a graph from a describegraph-style document:
//   {"nodes":[{"pub_key":...}], "edges":[{"channel_id","node1_pub","node2_pub","capacity"}]}
// Unknown fields are ignored. Balances default to a 50/50 split per channel
// unless the edge carries "node1_balance_msat"/"node2_balance_msat".
inline ChannelGraph load_snapshot(const nlohmann::json& doc) {
    ChannelGraph g;
    if (!doc.is_object()) throw ParseError("snapshot: top level must be an object");
    if (doc.contains("nodes")) {
        if (!doc["nodes"].is_array()) throw ParseError("snapshot: 'nodes' must be an array");
        for (auto& jn : doc["nodes"]) {
            if (!jn.is_object() || !jn.contains("pub_key") || !jn["pub_key"].is_string())
                throw ParseError("snapshot: node record missing string 'pub_key': " + jn.dump());
            std::string pk = jn["pub_key"].get<std::string>();
            if (g.has_node(pk)) throw ParseError("snapshot: duplicate node " + pk);
            Node& n = g.add_node(pk, pk);
            if (jn.contains("wallet_sat")) n.wallet_sat = jn["wallet_sat"].get<Sat>();
        }
    }
    if (doc.contains("edges")) {
        if (!doc["edges"].is_array()) throw ParseError("snapshot: 'edges' must be an array");
        for (auto& je : doc["edges"]) {
            if (!je.is_object() || !je.contains("node1_pub") || !je.contains("node2_pub") ||
                !je.contains("capacity"))
                throw ParseError("snapshot: malformed edge record: " + je.dump());
            std::string n1 = je["node1_pub"].get<std::string>();
            std::string n2 = je["node2_pub"].get<std::string>();
            std::string cid = je.contains("channel_id")
                                  ? (je["channel_id"].is_string()
                                         ? je["channel_id"].get<std::string>()
                                         : std::to_string(je["channel_id"].get<std::int64_t>()))
                                  : ("snap" + std::to_string(g.channels.size()));
            for (auto* n : {&n1, &n2})
                if (!g.has_node(*n))
                    throw ParseError("snapshot: channel " + cid + " references missing node " + *n);
            Sat cap = je["capacity"].is_string()
                          ? std::stoll(je["capacity"].get<std::string>())
                          : je["capacity"].get<Sat>();
            Channel c;
            c.chan_id = cid;
            c.node1 = n1;
            c.node2 = n2;
            c.capacity_sat = cap;
            Msat total = cap * kMsatPerSat;
            if (je.contains("node1_balance_msat")) {
                c.balance1_msat = je["node1_balance_msat"].get<Msat>();
                c.balance2_msat = total - c.balance1_msat;
            } else {
                c.balance1_msat = total / 2;
                c.balance2_msat = total - c.balance1_msat;
            }
            if (je.contains("is_private")) c.is_private = je["is_private"].get<bool>();
            if (g.channels.count(cid)) throw ParseError("snapshot: duplicate channel " + cid);
            g.channels.emplace(cid, std::move(c));
        }
    }
    return g;
}

inline ChannelGraph load_snapshot_text(const std::string& text) {
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded()) throw ParseError("snapshot: invalid JSON");
    return load_snapshot(doc);
}

}  // namespace lnsim
