#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace rrd {

// Deterministic RNG used everywhere a seed appears. The generator is
// std::mt19937_64 (bit-exact across platforms); all distributions are
// implemented here rather than via std::*_distribution, whose outputs vary
// between standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform01() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [lo, hi], inclusive. Unbiased via rejection.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    bool bernoulli(double p) { return uniform01() < p; }

    // Box-Muller with a cached spare draw.
    double normal(double mean = 0.0, double stddev = 1.0);

    // Index drawn proportionally to probs (assumed nonnegative, summing to ~1).
    // Falls back to the last index on accumulated rounding shortfall.
    int categorical(std::span<const double> probs);

    // Stable seed derivation for independent substreams (splitmix64 finalizer).
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace rrd
