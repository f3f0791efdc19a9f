#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace lnsim {

// All money is integer millisatoshi internally. Reports convert at the edge.
using Msat = std::int64_t;
using Sat = std::int64_t;

// Sim-time in integer milliseconds.
using SimTime = std::int64_t;

constexpr Msat kMsatPerSat = 1000;
constexpr double kSatPerBtc = 100'000'000.0;

inline double to_seconds(SimTime t) { return static_cast<double>(t) / 1000.0; }
inline double to_btc(Sat s) { return static_cast<double>(s) / kSatPerBtc; }

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : SimError {
    using SimError::SimError;
};
struct NotFoundError : SimError {
    using SimError::SimError;
};
struct InsufficientFundsError : SimError {
    using SimError::SimError;
};
struct PolicyError : SimError {
    using SimError::SimError;
};
struct NoRouteError : SimError {
    using SimError::SimError;
};
struct ConstraintError : SimError {
    using SimError::SimError;
};
struct PayloadTooLargeError : SimError {
    using SimError::SimError;
};
struct AuthenticationError : SimError {
    using SimError::SimError;
};
struct ConfigError : SimError {
    using SimError::SimError;
};

// 64-bit FNV-1a. Used wherever the simulator needs a cheap deterministic
// digest (capacity policies, simulated signatures, config digests).
inline std::uint64_t fnv1a64(const std::string& data) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// Single RNG stream per scenario; modules draw from sub-streams derived
// from (seed, label) so reordering module calls cannot shift the others.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t seed, const std::string& label)
        : engine_(seed ^ fnv1a64(label)) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform integer in [lo, hi]
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        std::uniform_int_distribution<std::int64_t> d(lo, hi);
        return d(engine_);
    }

    double uniform_real(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(engine_);
    }

    double normal(double mean, double sigma) {
        std::normal_distribution<double> d(mean, sigma);
        return d(engine_);
    }

    bool bernoulli(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        std::bernoulli_distribution d(p);
        return d(engine_);
    }

    Rng split(const std::string& label) {
        return Rng(engine_(), label);
    }

    std::mt19937_64& engine() { return engine_; }

  private:
    std::mt19937_64 engine_;
};

}  // namespace lnsim
