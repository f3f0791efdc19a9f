#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lnsim/covert_codec.hpp"
#include "lnsim/formation.hpp"

namespace lnsim {

// One forwarding record as a compromised intermediary sees it, with the
// upstream peer already resolved from the inbound channel.
struct ObservedForward {
    SimTime timestamp = 0;
    NodeId observer;
    NodeId upstream;
    Msat amt_out_msat = 0;
};

// Logs available to the defender: only events at compromised nodes.
struct ObserverSet {
    std::set<NodeId> compromised_nodes;
    std::vector<ObservedForward> forwards;                  // at compromised intermediaries
    std::vector<std::pair<SimTime, Msat>> cnc_receipt_log;  // at the compromised C&C
};

// Extracts what the compromised nodes themselves could log; nothing else
// leaves the engine.
inline ObserverSet collect_observers(const Engine& engine, const std::set<NodeId>& compromised,
                                     const NodeId& compromised_cnc) {
    ObserverSet obs;
    obs.compromised_nodes = compromised;
    for (auto& ev : engine.forwards) {
        if (!compromised.count(ev.node)) continue;
        const Channel& in = engine.graph.channel(ev.chan_id_in);
        obs.forwards.push_back({ev.timestamp, ev.node, in.other(ev.node), ev.amt_out_msat});
    }
    auto it = engine.receipts.find(compromised_cnc);
    if (it != engine.receipts.end() && compromised.count(compromised_cnc))
        for (auto& r : it->second)
            if (r.amount_msat > 0) obs.cnc_receipt_log.emplace_back(r.time, r.amount_msat);
    return obs;
}

struct SuspectReport {
    std::vector<std::pair<NodeId, double>> suspect_edges;  // descending by score
    double window_s = 15.0;
    std::size_t matched_receipts = 0;

    std::string csv() const {
        std::ostringstream os;
        os << "upstream,score\n";
        for (auto& [n, s] : suspect_edges) os << n << ',' << s << '\n';
        return os.str();
    }
};

// Observers see post-fee amounts; allow base + proportional fee per hop the
// payment may still have travelled.
inline Msat fee_slack_msat(Msat amount_msat, std::size_t max_remaining_hops = 3,
                           const FeePolicy& bound = {}) {
    return static_cast<Msat>(max_remaining_hops) *
           (bound.base_fee_msat + amount_msat * bound.prop_fee_ppm / 1'000'000 + 1);
}

// For every C&C receipt (t, a), forwards at compromised intermediaries with a
// matching amount inside [t - window, t] vote for their upstream peer. A
// peer matching k receipts scores k/(k+1), so one coincidence never clears 0.5.
inline SuspectReport timing_correlation(const ObserverSet& observers, double window_s = 15.0,
                                        std::size_t max_remaining_hops = 3) {
    SuspectReport rep;
    rep.window_s = window_s;
    std::map<NodeId, std::size_t> votes;
    const SimTime window_ms = static_cast<SimTime>(window_s * 1000.0);
    for (auto& [t, a] : observers.cnc_receipt_log) {
        Msat slack = fee_slack_msat(a, max_remaining_hops);
        std::set<NodeId> voted;  // one vote per receipt per upstream
        for (auto& f : observers.forwards) {
            if (f.timestamp < t - window_ms || f.timestamp > t) continue;
            if (f.amt_out_msat < a - slack || f.amt_out_msat > a + slack) continue;
            voted.insert(f.upstream);
        }
        if (!voted.empty()) rep.matched_receipts++;
        for (auto& u : voted) votes[u]++;
    }
    for (auto& [n, k] : votes)
        rep.suspect_edges.emplace_back(
            n, static_cast<double>(k) / static_cast<double>(k + 1));
    std::stable_sort(rep.suspect_edges.begin(), rep.suspect_edges.end(),
                     [](auto& a, auto& b) {
                         if (a.second != b.second) return a.second > b.second;
                         return a.first < b.first;
                     });
    return rep;
}

struct ScanResult {
    std::vector<std::string> flagged_channels;
    std::set<NodeId> flagged_nodes;  // funders of flagged channels
    std::size_t true_positives = 0;
    std::size_t false_positives = 0;
    double precision = 1.0;
    double recall = 1.0;
};

// Runs the rendezvous predicate against every open public channel, the
// discovery mechanism turned defensive. `truth` is the set of C&C nodes that
// currently hold an open rendezvous channel (simulator-only ground truth).
inline ScanResult scan_policy_channels(const ChannelGraph& g, const PolicyK& hypothesis,
                                       const std::set<NodeId>& truth = {}) {
    ScanResult r;
    for (auto& [cid, c] : g.channels) {
        if (!c.is_open() || c.is_private) continue;
        if (!hypothesis.member(c.capacity_sat)) continue;
        r.flagged_channels.push_back(cid);
        r.flagged_nodes.insert(c.node1);
    }
    for (auto& n : r.flagged_nodes)
        (truth.count(n) ? r.true_positives : r.false_positives)++;
    if (!r.flagged_nodes.empty())
        r.precision = static_cast<double>(r.true_positives) /
                      static_cast<double>(r.flagged_nodes.size());
    if (!truth.empty())
        r.recall = static_cast<double>(r.true_positives) / static_cast<double>(truth.size());
    return r;
}

struct PoisonPlan {
    enum class Trigger { on_frame_open, fixed_time };
    NodeId target_cnc;
    std::vector<Sat> injected_amounts;
    Trigger trigger = Trigger::on_frame_open;
    SimTime at_ms = 0;  // fixed_time trigger
};

struct PoisonOutcome {
    bool delivered_equals_original = false;
    bool frame_corrupted = false;
    std::string decoded_text;
    Sat attacker_cost_sat = 0;  // amounts actually delivered
    Msat attacker_fee_msat = 0;
    std::size_t injections_landed = 0;
    std::size_t injection_failures = 0;
};

// Interleaves attacker keysends with a live amount-encoded transmission and
// decodes what the target actually received. Message-attached (noise) sends
// are atomic, so injections against them change nothing.
inline PoisonOutcome poison_stream(Engine& engine, const NodeId& botmaster,
                                   const NodeId& attacker, const PoisonPlan& plan,
                                   const std::string& command, Scheme scheme,
                                   const std::vector<RoutingHint>& hints = {},
                                   const std::vector<RoutingHint>& attacker_hints = {},
                                   const Codebook& cb = Codebook::canonical()) {
    PoisonOutcome out;
    const NodeId& target = plan.target_cnc;
    std::size_t baseline =
        engine.receipts.count(target) ? engine.receipts.at(target).size() : 0;

    auto inject_all = [&]() {
        for (Sat a : plan.injected_amounts) {
            PaymentResult r = engine.send_keysend(attacker, target, a * kMsatPerSat,
                                                  std::nullopt, attacker_hints);
            if (r.success) {
                out.injections_landed++;
                out.attacker_cost_sat += a;
                out.attacker_fee_msat += r.fee_paid_msat;
            } else {
                out.injection_failures++;
            }
        }
    };

    if (scheme == Scheme::noise) {
        SendReport sr = send_command_noise(engine, botmaster, target, command, hints);
        inject_all();
        std::string received;
        auto& rs = engine.receipts[target];
        for (std::size_t i = baseline; i < rs.size(); ++i)
            if (rs[i].message) received = rs[i].message->body;
        out.decoded_text = received;
        out.delivered_equals_original = received == command && sr.payments == 1;
        return out;
    }

    EncodedCommand enc =
        scheme == Scheme::ascii ? encode_ascii(command) : encode_huffman(command, cb);
    std::vector<Sat> wire = frame_amounts(enc);
    bool injected = false;
    for (std::size_t wi = 0; wi < wire.size(); ++wi) {
        if (!injected) {
            bool fire = plan.trigger == PoisonPlan::Trigger::on_frame_open
                            ? wi == 1
                            : engine.now() >= plan.at_ms;
            if (fire) {
                inject_all();
                injected = true;
            }
        }
        engine.send_keysend(botmaster, target, wire[wi] * kMsatPerSat, std::nullopt, hints);
    }
    if (!injected) inject_all();

    std::vector<Sat> observed;
    auto& rs = engine.receipts[target];
    for (std::size_t i = baseline; i < rs.size(); ++i)
        observed.push_back(rs[i].amount_msat / kMsatPerSat);
    StreamDecode dec = decode_stream(observed, scheme, cb);
    for (auto& f : dec.frames)
        if (f.status == DecodedFrame::Status::corrupted) out.frame_corrupted = true;
    if (!dec.frames.empty()) out.decoded_text = dec.frames.front().text;
    out.delivered_equals_original =
        dec.commands.size() == 1 && dec.commands.front() == command && !out.frame_corrupted;
    return out;
}

// Whether `target` would ignore a command signed by `claimed_sender`. The
// receipt rule is the flood one: valid signature, known signer, signer in
// the neighbor database, command_id not already executed.
inline bool verify_auth_rejection(Engine& engine, const LogicalTopology& topology,
                                  const NodeId& claimed_sender, const NodeId& target,
                                  const std::string& body, const std::string& command_id = "f1",
                                  const std::set<std::string>* executed = nullptr,
                                  bool tamper = false) {
    if (!topology.contains(target))
        throw NotFoundError("verify_auth_rejection: " + target + " is not a C&C");
    AttachedMessage msg =
        make_attached_message(claimed_sender, body, engine.now(), command_id);
    if (tamper) msg.body += "x";  // signature no longer covers the body
    NodeId sender;
    try {
        sender = recover_sender(engine.graph, msg);
    } catch (const AuthenticationError&) {
        return true;
    }
    if (sender == kUnknownSender) return true;
    if (!topology.nodes.at(target).contains(sender)) return true;
    if (executed && executed->count(command_id)) return true;
    return false;
}

}  // namespace lnsim
