#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lnsim/event_queue.hpp"
#include "lnsim/routing.hpp"
#include "lnsim/topology.hpp"

namespace lnsim {

constexpr const char* kUnknownSender = "<unknown>";

struct Htlc {
    enum class Status { pending, fulfilled, failed };
    std::string payment_hash;
    Msat amount_msat = 0;
    int timelock = 0;
    Status status = Status::pending;

    // fulfilled only when the matching pre-image is revealed
    bool fulfill(const std::string& preimage) {
        if (std::to_string(fnv1a64(preimage)) != payment_hash) return false;
        status = Status::fulfilled;
        return true;
    }
};

inline std::string hash_preimage(const std::string& preimage) {
    return std::to_string(fnv1a64(preimage));
}

// Payload carried by a message-attached keysend. The signature is a
// simulated credential: (signer id, digest over signer|body|timestamp|
// command_id). The property modeled is sender recoverability, not a curve.
struct AttachedMessage {
    std::string keysend_preimage;
    std::string body;
    std::string command_id;  // empty for plain messages
    SimTime timestamp = 0;
    NodeId signer;
    std::uint64_t signature = 0;

    static std::uint64_t digest(const NodeId& signer, const std::string& body,
                                SimTime timestamp, const std::string& command_id) {
        return fnv1a64(signer + "|" + body + "|" + std::to_string(timestamp) + "|" + command_id);
    }

    std::size_t serialized_size() const {
        // preimage (32) + signature/recovery (65) + timestamp (4) + body
        return 32 + 65 + 4 + body.size();
    }

    bool verify() const {
        return signature == digest(signer, body, timestamp, command_id);
    }
};

inline AttachedMessage make_attached_message(const NodeId& sender, const std::string& body,
                                             SimTime timestamp, const std::string& command_id = "",
                                             const std::string& preimage = "") {
    AttachedMessage m;
    m.keysend_preimage = preimage;
    m.body = body;
    m.command_id = command_id;
    m.timestamp = timestamp;
    m.signer = sender;
    m.signature = AttachedMessage::digest(sender, body, timestamp, command_id);
    return m;
}

// Returns the signing node, or kUnknownSender when the signer is absent from
// the graph. Tampered messages raise AuthenticationError.
inline NodeId recover_sender(const ChannelGraph& g, const AttachedMessage& m) {
    if (!m.verify()) throw AuthenticationError("attached message failed signature verification");
    if (!g.has_node(m.signer)) return kUnknownSender;
    return m.signer;
}

struct PaymentResult {
    bool success = false;
    Msat fee_paid_msat = 0;
    SimTime latency_ms = 0;
    std::size_t hops_used = 0;
    std::optional<std::size_t> failure_stage;

    double latency_s() const { return to_seconds(latency_ms); }
};

struct ForwardEvent {
    SimTime timestamp = 0;
    NodeId node;
    std::string chan_id_in;
    std::string chan_id_out;
    Msat amt_in_msat = 0;
    Msat amt_out_msat = 0;
    Msat fee_msat = 0;
};

struct Receipt {
    SimTime time = 0;
    Msat amount_msat = 0;
    std::optional<AttachedMessage> message;
};

enum class LatencyKind { per_payment_fixed, per_payment_gaussianish, per_hop_uniform };

// Sampled delays are strictly positive; the gaussianish model is a clamped
// normal so the envelope (max 10 s) is honored while the mean stays exact.
struct LatencyModel {
    LatencyKind kind = LatencyKind::per_payment_gaussianish;
    SimTime fixed_ms = 7000;
    SimTime mean_ms = 7000;
    SimTime sigma_ms = 1500;
    SimTime clamp_lo_ms = 4000;
    SimTime clamp_hi_ms = 10000;
    SimTime hop_lo_ms = 400;
    SimTime hop_hi_ms = 500;

    static LatencyModel fixed(SimTime ms) {
        LatencyModel m;
        m.kind = LatencyKind::per_payment_fixed;
        m.fixed_ms = ms;
        return m;
    }
    static LatencyModel keysend_default() { return LatencyModel{}; }
    static LatencyModel per_hop(SimTime lo_ms, SimTime hi_ms) {
        LatencyModel m;
        m.kind = LatencyKind::per_hop_uniform;
        m.hop_lo_ms = lo_ms;
        m.hop_hi_ms = hi_ms;
        return m;
    }

    // per-hop delay vector; per-payment models split the sampled total evenly
    std::vector<SimTime> sample_hops(Rng& rng, std::size_t nhops) const {
        if (nhops == 0) return {};
        std::vector<SimTime> out;
        out.reserve(nhops);
        switch (kind) {
            case LatencyKind::per_hop_uniform:
                for (std::size_t i = 0; i < nhops; ++i)
                    out.push_back(rng.uniform_int(hop_lo_ms, hop_hi_ms));
                return out;
            case LatencyKind::per_payment_fixed:
            case LatencyKind::per_payment_gaussianish: {
                SimTime total = fixed_ms;
                if (kind == LatencyKind::per_payment_gaussianish) {
                    double v = rng.normal(static_cast<double>(mean_ms), static_cast<double>(sigma_ms));
                    total = std::clamp<SimTime>(static_cast<SimTime>(v + 0.5), clamp_lo_ms, clamp_hi_ms);
                }
                SimTime each = total / static_cast<SimTime>(nhops);
                for (std::size_t i = 0; i + 1 < nhops; ++i) out.push_back(each);
                out.push_back(total - each * static_cast<SimTime>(nhops - 1));
                return out;
            }
        }
        throw SimError("unreachable latency kind");
    }

    SimTime sample_total(Rng& rng, std::size_t nhops) const {
        SimTime t = 0;
        for (SimTime d : sample_hops(rng, nhops)) t += d;
        return t;
    }
};

// The simulation engine: graph + clock + seeded rng + append-only logs.
// Payment execution is serialized on the simulation thread.
class Engine {
  public:
    ChannelGraph graph;
    EventQueue clock;
    Rng rng;
    LatencyModel latency = LatencyModel::keysend_default();
    FeeModel fee_model = FeeModel::per_channel();
    double midflight_failure_prob = 0.0;  // injected failure rate, default off

    explicit Engine(std::uint64_t seed = 0) : rng(seed, "engine") {}

    SimTime now() const { return clock.now(); }

    std::vector<ForwardEvent> forwards;
    std::map<NodeId, std::vector<Receipt>> receipts;

    // Executes a routed payment, blocking sim-time for its latency.
    // Either every hop's balances shift or none do.
    PaymentResult send_payment(const Route& route, Msat amount_msat) {
        if (route.hops.empty()) throw SimError("send_payment: empty route");
        PaymentResult res;
        res.hops_used = route.hop_count();

        auto hop_delays = latency.sample_hops(rng, route.hop_count());
        SimTime start = clock.now();

        // validation pass: liquidity plus injected mid-flight failures
        std::optional<std::size_t> fail_at;
        for (std::size_t i = 0; i < route.hops.size(); ++i) {
            const RouteHop& h = route.hops[i];
            Channel& c = graph.channel(h.chan_id);
            Msat traverse = h.amt_to_forward_msat + (i == 0 ? first_hop_extra(route) : 0);
            if (!c.is_open() || c.balance_from(h.from) < traverse) {
                fail_at = i;
                break;
            }
            if (midflight_failure_prob > 0.0 && rng.bernoulli(midflight_failure_prob)) {
                fail_at = i;
                break;
            }
        }
        if (fail_at) {
            // upstream HTLCs roll back; latency accrues up to the failed hop
            SimTime t = start;
            for (std::size_t i = 0; i <= *fail_at && i < hop_delays.size(); ++i) t += hop_delays[i];
            clock.sleep_until(t);
            res.success = false;
            res.failure_stage = *fail_at;
            res.latency_ms = t - start;
            return res;
        }

        // apply pass
        SimTime t = start;
        for (std::size_t i = 0; i < route.hops.size(); ++i) {
            const RouteHop& h = route.hops[i];
            Channel& c = graph.channel(h.chan_id);
            Msat traverse = h.amt_to_forward_msat + (i == 0 ? first_hop_extra(route) : 0);
            c.balance_from(h.from) -= traverse;
            c.balance_from(h.to) += traverse;
            t += hop_delays[i];
            if (i > 0) {
                const RouteHop& prev = route.hops[i - 1];
                Msat amt_in = prev.amt_to_forward_msat + (i == 1 ? first_hop_extra(route) : 0);
                forwards.push_back({t, h.from, prev.chan_id, h.chan_id, amt_in,
                                    h.amt_to_forward_msat, amt_in - h.amt_to_forward_msat});
            }
        }
        clock.sleep_until(t);
        res.success = true;
        res.fee_paid_msat = route.total_fee_msat;
        res.latency_ms = t - start;
        receipts[route.hops.back().to].push_back({t, amount_msat, std::nullopt});
        return res;
    }

    // Spontaneous payment: sender generates the pre-image; optional attached
    // message is delivered only to the destination.
    PaymentResult send_keysend(const NodeId& src, const NodeId& dst, Msat amount_msat,
                               std::optional<AttachedMessage> message = std::nullopt,
                               const std::vector<RoutingHint>& hints = {},
                               const RouteConstraints& constraints = {}) {
        const Node& d = graph.node(dst);
        if (!d.accepts_keysend)
            throw SimError("send_keysend: " + dst + " does not accept keysend payments");
        if (!d.online) {
            PaymentResult r;
            r.success = false;
            r.failure_stage = 0;
            return r;
        }
        if (message && message->serialized_size() > OnionPacket::kPayloadCapacity)
            throw PayloadTooLargeError("attached message serialized size " +
                                       std::to_string(message->serialized_size()) +
                                       " exceeds " + std::to_string(OnionPacket::kPayloadCapacity));
        Route route;
        try {
            route = find_route(graph, src, dst, amount_msat, hints, constraints, fee_model);
        } catch (const NoRouteError&) {
            PaymentResult r;
            r.success = false;
            r.failure_stage = 0;
            return r;
        }
        std::string preimage = "pre" + std::to_string(rng.next_u64());
        if (message) message->keysend_preimage = preimage;
        build_onion(route, message ? message->body : "");  // size check
        PaymentResult res = send_payment(route, amount_msat);
        if (res.success && message) {
            receipts[dst].back().message = message;
        }
        return res;
    }

    // All events forwarded by `node` within [from, to], timestamp-ascending.
    std::vector<ForwardEvent> forwarding_history(const NodeId& node, SimTime from = 0,
                                                 SimTime to = INT64_MAX) const {
        std::vector<ForwardEvent> out;
        for (auto& ev : forwards)
            if (ev.node == node && ev.timestamp >= from && ev.timestamp <= to)
                out.push_back(ev);
        std::stable_sort(out.begin(), out.end(),
                         [](const ForwardEvent& a, const ForwardEvent& b) {
                             return a.timestamp < b.timestamp;
                         });
        return out;
    }

    Msat total_received_msat(const NodeId& node) const {
        auto it = receipts.find(node);
        if (it == receipts.end()) return 0;
        Msat s = 0;
        for (auto& r : it->second) s += r.amount_msat;
        return s;
    }

  private:
    // fixed-fee model rides the whole route-level fee on the first hop
    static Msat first_hop_extra(const Route& route) {
        return route.hops.front().fee_msat;
    }
};

inline nlohmann::json forwarding_history_json(const std::vector<ForwardEvent>& evs) {
    nlohmann::json arr = nlohmann::json::array();
    for (auto& e : evs)
        arr.push_back({{"timestamp", e.timestamp},
                       {"chan_id_in", e.chan_id_in},
                       {"chan_id_out", e.chan_id_out},
                       {"amt_in", e.amt_in_msat},
                       {"amt_out", e.amt_out_msat},
                       {"fee", e.fee_msat}});
    return arr;
}

inline std::string forwarding_history_csv(const std::vector<ForwardEvent>& evs) {
    std::ostringstream os;
    os << "timestamp,chan_id_in,chan_id_out,amt_in,amt_out,fee\n";
    for (auto& e : evs)
        os << e.timestamp << ',' << e.chan_id_in << ',' << e.chan_id_out << ','
           << e.amt_in_msat << ',' << e.amt_out_msat << ',' << e.fee_msat << '\n';
    return os.str();
}

}  // namespace lnsim
