#pragma once

#include <cstdint>
#include <random>

#include "common.hpp"

namespace bbq {

// Deterministic RNG shared by every randomized routine. mt19937_64 is fully
// specified by the standard, and uniforms are built from raw bits (not
// std::uniform_real_distribution, whose output is implementation-defined),
// so identical seeds give identical streams on every platform.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next_u64() { return engine_(); }

    // Strictly inside (0,1): ((bits>>11)+0.5) * 2^-53.
    double uniform01() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    // Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        require(n > 0, ErrorCode::invalid_argument, "Rng::below needs n > 0");
        // Rejection sampling keeps the draw exactly uniform.
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace bbq
