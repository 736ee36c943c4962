#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace bbq {

// Error categories shared with the C API (see include/bbq.h).
enum class ErrorCode : int {
    ok = 0,
    io = 1,
    bad_magic = 2,
    truncated = 3,
    bad_dtype = 4,
    invalid_argument = 5,
    domain = 6,
    shape_mismatch = 7,
    encoding = 8,
    diverged = 9,
    internal = 10,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) fail(code, what);
}

// splitmix64, used to derive independent stream seeds from one user seed.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    uint64_t s = seed ^ (0x632be59bd9b4e019ULL * (stream + 1));
    return splitmix64(s);
}

}  // namespace bbq
