#pragma once

#include <cstdint>
#include <string>

namespace cascadeflow {

// Deterministic PRNG with a pinned cross-platform algorithm (SplitMix64 core,
// Box-Muller normals). std:: distributions are implementation-defined, which
// would break bitwise run-to-run reproducibility guarantees, so sampling is
// done here explicitly.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double uniform01();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Uniform integer in [lo, hi], inclusive, unbiased (rejection sampling).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
    // Standard normal via Box-Muller (second variate cached).
    double normal();
    bool bernoulli(double p);

    // Derive an independent child stream; deterministic in (state, id).
    Rng stream(std::uint64_t id) const;

    // State serialization for checkpoints (hex string; includes the cached
    // Box-Muller variate so resume is bitwise exact).
    std::string state_str() const;
    static Rng from_state_str(const std::string& s);

private:
    std::uint64_t state_ = 0;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

// SplitMix64 output function on a single value; used for seed mixing.
std::uint64_t mix64(std::uint64_t x);

}  // namespace cascadeflow
