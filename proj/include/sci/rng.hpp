#pragma once

#include <cstdint>

namespace sci {

/// Deterministic splitmix64-based generator. Self-contained so that streams
/// are reproducible byte-for-byte across standard-library implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    float uniform(float lo, float hi) {
        return lo + (hi - lo) * static_cast<float>(next_double());
    }

    /// Uniform integer in [0, n). n must be positive.
    int uniform_int(int n) {
        return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
    }

    /// Standard normal via Box-Muller (one value per call, no cached pair).
    float gaussian();

    /// Derive an independent substream; stable regardless of draw order on
    /// the parent. Used to key per-entity patterns in the data generator.
    Rng fork(uint64_t stream) const;

private:
    uint64_t state_;
};

/// Mix a label into a seed (FNV-style) for stable stream derivation.
uint64_t mix_seed(uint64_t seed, uint64_t tag);

} // namespace sci
