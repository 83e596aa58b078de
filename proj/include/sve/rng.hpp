#pragma once

#include <array>
#include <cstdint>

namespace sve {

/// Philox4x32-10 counter-based generator.
///
/// Every draw is a pure function of (seed, stream, position), so simulations
/// are reproducible bit-for-bit regardless of worker count, and particle
/// streams can be relabeled without touching any other stream.
namespace rng {

std::array<std::uint32_t, 4> philox4x32(std::uint64_t seed, std::uint64_t stream,
                                        std::uint64_t position);

/// Uniform double in (0, 1), never exactly 0 or 1.
double uniform_open(std::uint64_t seed, std::uint64_t stream, std::uint64_t position,
                    unsigned which /* 0 or 1 */);

/// k-th standard normal of a stream (Box-Muller over consecutive blocks).
double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t k);

// Position-word tags keep the independent draw families of one simulation
// from colliding: initial condition, Brownian increments, factorized noise.
inline constexpr std::uint64_t kTagInitial = 1;
inline constexpr std::uint64_t kTagIncrement = 2;
inline constexpr std::uint64_t kTagFactorNoise = 3;
inline constexpr std::uint64_t kTagScratch = 4;

/// position = (tag : 8 bits | index : 24 bits | draw : 32 bits)
inline std::uint64_t position(std::uint64_t tag, std::uint64_t index, std::uint64_t draw) {
    return (tag << 56) | ((index & 0xFFFFFFull) << 32) | (draw & 0xFFFFFFFFull);
}

/// Normal draw addressed by (stream, tag, index, k).
double normal_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag,
                 std::uint64_t index, std::uint64_t k);

} // namespace rng
} // namespace sve
