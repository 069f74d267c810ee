#include "sci/common.hpp"

#include <cstring>

namespace sci {

uint64_t bytes_checksum(std::span<const float> data, uint64_t seed) {
    uint64_t h = seed;
    for (float v : data) {
        uint32_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        for (int shift = 0; shift < 32; shift += 8) {
            h ^= (bits >> shift) & 0xffu;
            h *= 0x100000001b3ull;
        }
    }
    return h;
}

} // namespace sci
