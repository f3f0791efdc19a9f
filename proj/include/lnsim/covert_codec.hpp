#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <sstream>
#include <string>
#include <vector>

#include "lnsim/payments.hpp"

namespace lnsim {

constexpr Sat kFrameStartSat = 5;
constexpr Sat kFrameEndSat = 6;

struct AbandonedCommandError : SimError {
    using SimError::SimError;
};
struct EncodingError : SimError {
    using SimError::SimError;
};

// char -> digit-string over {1,2,3,4}; prefix-free and injective.
class Codebook {
  public:
    Codebook() = default;
    explicit Codebook(std::map<char, std::string> mapping) : map_(std::move(mapping)) {
        validate();
    }

    const std::string& code(char c) const {
        auto it = map_.find(c);
        if (it == map_.end())
            throw EncodingError(std::string("character '") + c + "' not in codebook");
        return it->second;
    }

    bool covers(char c) const { return map_.count(c) > 0; }
    const std::map<char, std::string>& mapping() const { return map_; }

    // greedy prefix walk; nullopt when `digits` is no complete codeword yet
    std::optional<char> match(const std::string& digits) const {
        auto it = reverse_.find(digits);
        if (it == reverse_.end()) return std::nullopt;
        return it->second;
    }

    // true when `digits` is a prefix of at least one codeword
    bool viable_prefix(const std::string& digits) const {
        for (auto& [c, code] : map_)
            if (code.size() >= digits.size() && code.compare(0, digits.size(), digits) == 0)
                return true;
        return false;
    }

    std::size_t encoded_digits(const std::string& text) const {
        std::size_t n = 0;
        for (char c : text) n += code(c).size();
        return n;
    }

    std::string serialize() const {
        std::ostringstream os;
        for (auto& [c, d] : map_) os << c << '\t' << d << '\n';
        return os.str();
    }

    static Codebook deserialize(const std::string& text) {
        std::map<char, std::string> m;
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            auto tab = line.find('\t');
            if (tab != 1) throw ParseError("codebook line malformed: " + line);
            m[line[0]] = line.substr(tab + 1);
        }
        return Codebook(std::move(m));
    }

    // The canonical quaternary codebook used for acceptance runs.
    static const Codebook& canonical() {
        static const Codebook cb{{
            {'s', "234"}, {'n', "233"}, {'o', "232"}, {'h', "231"},
            {'d', "224"}, {'g', "223"}, {'c', "222"}, {'9', "221"},
            {'6', "214"}, {'2', "213"}, {'3', "212"}, {'u', "211"},
            {'p', "144"}, {'i', "143"}, {'8', "142"}, {'0', "141"},
            {'.', "24"},  {'1', "12"},  {'-', "13"},  {'E', "4"},
            {' ', "11"},  {'S', "3"},
        }};
        return cb;
    }

  private:
    void validate() const {
        for (auto& [c, code] : map_) {
            if (code.empty()) throw EncodingError("empty codeword");
            for (char d : code)
                if (d < '1' || d > '4')
                    throw EncodingError("codeword digit outside 1-4: " + code);
            for (auto& [c2, code2] : map_)
                if (c != c2 && code2.compare(0, code.size(), code) == 0 &&
                    code2.size() >= code.size())
                    throw EncodingError("codebook not prefix-free: " + code + " prefixes " + code2);
        }
        const_cast<Codebook*>(this)->reverse_.clear();
        for (auto& [c, code] : map_) const_cast<Codebook*>(this)->reverse_[code] = c;
    }

    std::map<char, std::string> map_;
    std::map<std::string, char> reverse_;
};

// Radix-n Huffman over a frequency table. Deterministic tie-breaking; not
// required to reproduce the canonical table, only to be prefix-free and
// no worse in total cost.
inline Codebook generate_codebook(const std::map<char, std::size_t>& freqs, int radix = 4) {
    if (freqs.empty()) throw EncodingError("generate_codebook: empty frequency table");
    if (radix < 2 || radix > 4) throw EncodingError("generate_codebook: radix must be 2..4");
    if (freqs.size() == 1)
        return Codebook({{freqs.begin()->first, "1"}});

    struct HuffNode {
        std::size_t weight;
        std::uint64_t order;  // insertion tie-break
        std::optional<char> symbol;
        std::vector<std::unique_ptr<HuffNode>> children;
    };
    auto cmp = [](const HuffNode* a, const HuffNode* b) {
        if (a->weight != b->weight) return a->weight > b->weight;
        return a->order > b->order;
    };
    std::vector<std::unique_ptr<HuffNode>> storage;
    std::priority_queue<HuffNode*, std::vector<HuffNode*>, decltype(cmp)> pq(cmp);
    std::uint64_t order = 0;
    for (auto& [c, w] : freqs) {
        storage.push_back(std::make_unique<HuffNode>(HuffNode{w, order++, c, {}}));
        pq.push(storage.back().get());
    }
    // pad with zero-weight dummies so every merge takes exactly `radix`
    std::size_t count = freqs.size();
    while ((count - 1) % (radix - 1) != 0) {
        storage.push_back(std::make_unique<HuffNode>(HuffNode{0, order++, std::nullopt, {}}));
        pq.push(storage.back().get());
        ++count;
    }
    while (pq.size() > 1) {
        auto parent = std::make_unique<HuffNode>(HuffNode{0, order++, std::nullopt, {}});
        for (int i = 0; i < radix && !pq.empty(); ++i) {
            HuffNode* child = pq.top();
            pq.pop();
            parent->weight += child->weight;
            for (auto& s : storage)
                if (s.get() == child) {
                    parent->children.push_back(std::move(s));
                    break;
                }
        }
        storage.erase(std::remove(storage.begin(), storage.end(), nullptr), storage.end());
        pq.push(parent.get());
        storage.push_back(std::move(parent));
    }
    std::map<char, std::string> codes;
    std::function<void(const HuffNode*, const std::string&)> walk =
        [&](const HuffNode* n, const std::string& prefix) {
            if (n->symbol) {
                codes[*n->symbol] = prefix.empty() ? "1" : prefix;
                return;
            }
            for (std::size_t i = 0; i < n->children.size(); ++i)
                walk(n->children[i].get(), prefix + static_cast<char>('1' + i));
        };
    walk(storage.back().get(), "");
    return Codebook(std::move(codes));
}

enum class Scheme { ascii, huffman, noise };

inline const char* scheme_name(Scheme s) {
    switch (s) {
        case Scheme::ascii: return "ascii";
        case Scheme::huffman: return "huffman";
        case Scheme::noise: return "noise";
    }
    return "?";
}

struct EncodedCommand {
    Scheme scheme = Scheme::ascii;
    std::vector<Sat> amounts_sat;  // framing sentinels excluded
    std::string body;

    Sat total_sat() const {
        Sat s = 0;
        for (Sat a : amounts_sat) s += a;
        return s;
    }
};

inline EncodedCommand encode_ascii(const std::string& command) {
    EncodedCommand e;
    e.scheme = Scheme::ascii;
    e.body = command;
    for (unsigned char c : command) {
        if (c > 127)
            throw EncodingError("non-ASCII character (code " + std::to_string(int(c)) + ")");
        e.amounts_sat.push_back(static_cast<Sat>(c));
    }
    return e;
}

inline EncodedCommand encode_huffman(const std::string& command,
                                     const Codebook& cb = Codebook::canonical()) {
    EncodedCommand e;
    e.scheme = Scheme::huffman;
    e.body = command;
    for (char c : command)
        for (char d : cb.code(c)) e.amounts_sat.push_back(static_cast<Sat>(d - '0'));
    return e;
}

// Wire framing: START, body, END. In an ASCII frame a literal amount 6 is
// escaped by doubling so the single END sentinel stays unambiguous; huffman
// bodies only carry 1-4 and need no escaping.
inline std::vector<Sat> frame_amounts(const EncodedCommand& e) {
    std::vector<Sat> out;
    out.push_back(kFrameStartSat);
    for (Sat a : e.amounts_sat) {
        out.push_back(a);
        if (e.scheme == Scheme::ascii && a == kFrameEndSat) out.push_back(a);
    }
    out.push_back(kFrameEndSat);
    return out;
}

struct DecodedFrame {
    enum class Status { ok, corrupted, pending };
    Status status = Status::ok;
    std::string text;
    std::size_t offset = 0;  // stream index of the frame's START sentinel
    std::string reason;
};

struct StreamDecode {
    std::vector<std::string> commands;  // texts of cleanly decoded frames
    std::vector<DecodedFrame> frames;
};

// Robust to garbage outside frames. Corrupted frames are surfaced with the
// offset of the offending amount rather than silently dropped.
inline StreamDecode decode_stream(const std::vector<Sat>& observed, Scheme scheme,
                                  const Codebook& cb = Codebook::canonical()) {
    StreamDecode out;
    std::size_t i = 0;
    const std::size_t n = observed.size();
    while (i < n) {
        if (observed[i] != kFrameStartSat) {
            ++i;
            continue;
        }
        DecodedFrame frame;
        frame.offset = i;
        ++i;
        std::string text;
        std::string digits;  // huffman prefix in progress
        bool closed = false;
        bool corrupt = false;
        while (i < n) {
            Sat a = observed[i];
            if (scheme == Scheme::ascii) {
                if (a == kFrameEndSat) {
                    if (i + 1 < n && observed[i + 1] == kFrameEndSat) {
                        text.push_back(static_cast<char>(kFrameEndSat));
                        i += 2;
                        continue;
                    }
                    ++i;
                    closed = true;
                    break;
                }
                if (a < 0 || a > 127) {
                    if (!corrupt) {
                        corrupt = true;
                        frame.reason = "amount " + std::to_string(a) +
                                       " outside ASCII range at offset " + std::to_string(i);
                    }
                    ++i;
                    continue;
                }
                text.push_back(static_cast<char>(a));
                ++i;
            } else {  // huffman
                if (a == kFrameEndSat) {
                    ++i;
                    closed = true;
                    break;
                }
                if (a < 1 || a > 4) {
                    if (!corrupt) {
                        corrupt = true;
                        frame.reason = "amount " + std::to_string(a) +
                                       " outside huffman digit range at offset " + std::to_string(i);
                    }
                    ++i;
                    continue;
                }
                digits.push_back(static_cast<char>('0' + a));
                if (auto c = cb.match(digits)) {
                    text.push_back(*c);
                    digits.clear();
                } else if (!cb.viable_prefix(digits)) {
                    if (!corrupt) {
                        corrupt = true;
                        frame.reason = "undecodable digit prefix '" + digits +
                                       "' ending at offset " + std::to_string(i);
                    }
                    digits.clear();
                }
                ++i;
            }
        }
        if (!closed) {
            frame.status = DecodedFrame::Status::pending;
            frame.text = text;
            frame.reason = "frame not terminated";
        } else if (corrupt || !digits.empty()) {
            frame.status = DecodedFrame::Status::corrupted;
            frame.text = text;
            if (frame.reason.empty())
                frame.reason = "dangling digit prefix '" + digits + "'";
        } else {
            frame.status = DecodedFrame::Status::ok;
            frame.text = text;
            out.commands.push_back(text);
        }
        out.frames.push_back(std::move(frame));
    }
    return out;
}

struct SendPolicy {
    int k = 3;                          // max consecutive retries per payment
    SimTime reschedule_delay_ms = 3600'000;
    bool online_check = true;
    int reschedule_cap = 5;
};

struct SendReport {
    std::size_t payments = 0;           // character payments delivered
    std::size_t sentinel_payments = 0;  // START/END deliveries
    std::size_t attempts = 0;           // every payment attempt, retries included
    Sat total_sat = 0;                  // satoshi carried by character payments
    Msat fee_msat = 0;                  // routing fees of character payments
    Msat sentinel_fee_msat = 0;
    SimTime duration_ms = 0;            // character-payment latency sum
    SimTime wall_ms = 0;                // includes sentinels, retries, reschedules
    int reschedules = 0;

    double duration_s() const { return to_seconds(duration_ms); }
};

// Alg-style retry/reschedule send loop: START, one keysend per amount, END.
// Exhausting k consecutive retries reschedules the whole command.
inline SendReport send_command(Engine& engine, const NodeId& botmaster, const NodeId& cnc,
                               const std::string& command, Scheme scheme,
                               const SendPolicy& policy = {},
                               const std::vector<RoutingHint>& hints = {},
                               const Codebook& cb = Codebook::canonical()) {
    if (scheme == Scheme::noise)
        throw SimError("send_command: use send_command_noise for the noise scheme");
    EncodedCommand enc =
        scheme == Scheme::ascii ? encode_ascii(command) : encode_huffman(command, cb);
    std::vector<Sat> wire = frame_amounts(enc);

    SendReport report;
    SimTime wall_start = engine.now();

    for (int attempt_round = 0; attempt_round <= policy.reschedule_cap; ++attempt_round) {
        if (attempt_round > 0) {
            report.reschedules++;
            engine.clock.sleep_until(engine.now() + policy.reschedule_delay_ms);
        }
        if (policy.online_check && !engine.graph.node(cnc).online) continue;

        bool round_ok = true;
        std::size_t payments = 0, sentinels = 0;
        Sat total_sat = 0;
        Msat fee = 0, sentinel_fee = 0;
        SimTime duration = 0;

        for (std::size_t wi = 0; wi < wire.size() && round_ok; ++wi) {
            Sat amount = wire[wi];
            bool is_sentinel = wi == 0 || wi + 1 == wire.size();
            bool delivered = false;
            for (int retry = 0; retry <= policy.k; ++retry) {
                report.attempts++;
                PaymentResult r =
                    engine.send_keysend(botmaster, cnc, amount * kMsatPerSat, std::nullopt, hints);
                if (r.success) {
                    delivered = true;
                    if (is_sentinel) {
                        sentinels++;
                        sentinel_fee += r.fee_paid_msat;
                    } else {
                        payments++;
                        total_sat += amount;
                        fee += r.fee_paid_msat;
                        duration += r.latency_ms;
                    }
                    break;
                }
            }
            if (!delivered) round_ok = false;
        }
        if (round_ok) {
            report.payments = payments;
            report.sentinel_payments = sentinels;
            report.total_sat = total_sat;
            report.fee_msat = fee;
            report.sentinel_fee_msat = sentinel_fee;
            report.duration_ms = duration;
            report.wall_ms = engine.now() - wall_start;
            return report;
        }
    }
    throw AbandonedCommandError("send_command: " + cnc + " unreachable after " +
                                std::to_string(policy.reschedule_cap) + " reschedules");
}

// Single-payment message attachment path.
inline SendReport send_command_noise(Engine& engine, const NodeId& src, const NodeId& dst,
                                     const std::string& command,
                                     const std::vector<RoutingHint>& hints = {},
                                     const std::string& command_id = "",
                                     Sat amount_sat = 10) {
    AttachedMessage msg = make_attached_message(src, command, engine.now(), command_id);
    if (msg.serialized_size() > OnionPacket::kPayloadCapacity)
        throw PayloadTooLargeError("command serializes to " +
                                   std::to_string(msg.serialized_size()) + " bytes");
    SendReport report;
    SimTime start = engine.now();
    PaymentResult r = engine.send_keysend(src, dst, amount_sat * kMsatPerSat, msg, hints);
    report.attempts = 1;
    if (r.success) {
        report.payments = 1;
        report.total_sat = amount_sat;
        report.fee_msat = r.fee_paid_msat;
        report.duration_ms = r.latency_ms;
    }
    report.wall_ms = engine.now() - start;
    return report;
}

// Sends a C&C server's accumulated funds to the collector once they cross
// the threshold. Below-threshold and offline-collector calls change nothing.
inline std::optional<PaymentResult> reimburse_collector(Engine& engine, const NodeId& cnc,
                                                        const NodeId& collector,
                                                        const std::vector<RoutingHint>& hints,
                                                        Sat threshold_sat,
                                                        Msat& reimbursed_msat) {
    Msat accumulated = engine.total_received_msat(cnc) - reimbursed_msat;
    if (accumulated / kMsatPerSat < threshold_sat) return std::nullopt;
    if (!engine.graph.node(collector).online) return std::nullopt;
    Msat fee_probe;
    try {
        Route probe = find_route(engine.graph, cnc, collector, accumulated, hints, {},
                                 engine.fee_model);
        fee_probe = probe.total_fee_msat;
    } catch (const NoRouteError&) {
        return std::nullopt;  // retained, retried at next threshold crossing
    }
    Msat amount = accumulated - fee_probe;
    if (amount <= 0) return std::nullopt;
    PaymentResult r = engine.send_keysend(cnc, collector, amount, std::nullopt, hints);
    if (r.success) reimbursed_msat += accumulated;
    return r;
}

}  // namespace lnsim
