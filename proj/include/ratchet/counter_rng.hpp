#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace ratchet {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stateless generator: every draw is a hash of (seed, stream, counter, lane),
/// so a draw never depends on how many other draws were made before it.
class CounterRng {
public:
    explicit constexpr CounterRng(std::uint64_t seed) noexcept : key_(mix64(seed)) {}

    constexpr std::uint64_t bits(std::uint64_t stream, std::uint64_t counter,
                                 std::uint64_t lane) const noexcept {
        std::uint64_t h = mix64(key_ ^ stream);
        h = mix64(h ^ (counter * 0xd1b54a32d192ed03ULL));
        return mix64(h ^ (lane * 0x8cb92ba72f3d8dd7ULL + 0x632be59bd9b4e019ULL));
    }

    /// Uniform on the open interval (0, 1).
    double uniform(std::uint64_t stream, std::uint64_t counter,
                   std::uint64_t lane) const noexcept {
        return (static_cast<double>(bits(stream, counter, lane) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller on two independent lanes.
    double normal(std::uint64_t stream, std::uint64_t counter,
                  std::uint64_t component) const noexcept {
        const double u1 = uniform(stream, counter, 2 * component);
        const double u2 = uniform(stream, counter, 2 * component + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::uint64_t key_;
};

} // namespace ratchet
