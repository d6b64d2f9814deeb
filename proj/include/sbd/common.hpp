#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace sbd {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

inline void require(bool cond, const std::string& msg) {
    if (!cond) fail(msg);
}

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (int d : s) {
        require(d > 0, "shape extent must be positive, got " + std::to_string(d));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

// Every public tensor/signal operation keeps values finite; a NaN/Inf is an
// error surfaced at the op that produced it, never silently propagated.
inline void ensure_finite(std::span<const double> x, const char* what) {
    for (double v : x)
        if (!std::isfinite(v)) fail(std::string(what) + ": non-finite value produced");
}

inline void ensure_finite(double v, const char* what) {
    if (!std::isfinite(v)) fail(std::string(what) + ": non-finite value produced");
}

// SplitMix64-style mixer; derives independent sub-seeds (net init, noise
// inputs, measurement noise) from one user-facing run seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace sbd
