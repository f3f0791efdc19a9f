#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <optional>
#include <queue>
#include <vector>

#include "lnsim/core.hpp"

namespace lnsim {

// Time-ordered event queue with stable FIFO tie-break at equal timestamps.
// One engine = one thread; determinism under a fixed seed is mandatory.
class EventQueue {
  public:
    using Action = std::function<void()>;

    struct Event {
        SimTime at;
        std::uint64_t seq;
        Action action;
    };

    SimTime now() const { return now_; }

    void schedule(SimTime at, Action action) {
        if (at < now_) throw SimError("schedule: time " + std::to_string(at) + " is in the past (now " + std::to_string(now_) + ")");
        heap_.push_back({at, seq_++, std::move(action)});
        std::push_heap(heap_.begin(), heap_.end(), later);
    }

    // Pops and runs the next event. Returns false at end-of-simulation.
    bool advance() {
        if (heap_.empty()) return false;
        std::pop_heap(heap_.begin(), heap_.end(), later);
        Event ev = std::move(heap_.back());
        heap_.pop_back();
        now_ = ev.at;
        ev.action();
        return true;
    }

    void run_to_completion() {
        while (advance()) {}
    }

    // Advances the clock without dispatch; used by sequential send loops
    // that model blocking waits.
    void sleep_until(SimTime t) {
        if (t < now_) throw SimError("sleep_until: time moves backwards");
        now_ = t;
    }

    bool empty() const { return heap_.empty(); }
    std::size_t pending() const { return heap_.size(); }

  private:
    static bool later(const Event& a, const Event& b) {
        if (a.at != b.at) return a.at > b.at;
        return a.seq > b.seq;
    }

    SimTime now_ = 0;
    std::uint64_t seq_ = 0;
    std::vector<Event> heap_;
};

}  // namespace lnsim
