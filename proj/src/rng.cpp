#include "sci/rng.hpp"

#include <cmath>

namespace sci {

float Rng::gaussian() {
    // Box-Muller; u1 kept away from zero so log() stays finite.
    double u1 = 0.0;
    do {
        u1 = next_double();
    } while (u1 <= 1e-12);
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return static_cast<float>(r * std::cos(2.0 * 3.14159265358979323846 * u2));
}

uint64_t mix_seed(uint64_t seed, uint64_t tag) {
    uint64_t h = seed ^ 0x9e3779b97f4a7c15ull;
    h ^= tag + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h = (h ^ (h >> 27)) * 0x94d049bb133111ebull;
    return h ^ (h >> 31);
}

Rng Rng::fork(uint64_t stream) const {
    return Rng(mix_seed(state_, stream));
}

} // namespace sci
