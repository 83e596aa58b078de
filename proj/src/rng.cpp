#include "sve/rng.hpp"

#include <cmath>

namespace sve {
namespace rng {

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void round_once(std::array<std::uint32_t, 4>& ctr, std::uint32_t k0, std::uint32_t k1) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(kPhiloxM0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(kPhiloxM1) * ctr[2];
    const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
    const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

inline double to_unit_open(std::uint64_t x) {
    // 53 significant bits, shifted into (0,1).
    return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

constexpr double kTwoPi = 6.283185307179586476925286766559;

} // namespace

std::array<std::uint32_t, 4> philox4x32(std::uint64_t seed, std::uint64_t stream,
                                        std::uint64_t position) {
    std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
        static_cast<std::uint32_t>(position), static_cast<std::uint32_t>(position >> 32)};
    std::uint32_t k0 = static_cast<std::uint32_t>(seed);
    std::uint32_t k1 = static_cast<std::uint32_t>(seed >> 32);
    for (int r = 0; r < 10; ++r) {
        round_once(ctr, k0, k1);
        k0 += kWeyl0;
        k1 += kWeyl1;
    }
    return ctr;
}

double uniform_open(std::uint64_t seed, std::uint64_t stream, std::uint64_t position,
                    unsigned which) {
    const auto b = philox4x32(seed, stream, position);
    const std::uint64_t lo = (static_cast<std::uint64_t>(b[1]) << 32) | b[0];
    const std::uint64_t hi = (static_cast<std::uint64_t>(b[3]) << 32) | b[2];
    return to_unit_open(which == 0 ? lo : hi);
}

namespace {

inline double box_muller(std::uint64_t seed, std::uint64_t stream, std::uint64_t block,
                         unsigned which) {
    const auto b = philox4x32(seed, stream, block);
    const std::uint64_t w0 = (static_cast<std::uint64_t>(b[1]) << 32) | b[0];
    const std::uint64_t w1 = (static_cast<std::uint64_t>(b[3]) << 32) | b[2];
    const double u1 = to_unit_open(w0);
    const double u2 = to_unit_open(w1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    return which == 0 ? r * std::cos(kTwoPi * u2) : r * std::sin(kTwoPi * u2);
}

} // namespace

double normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t k) {
    return box_muller(seed, stream, k >> 1, static_cast<unsigned>(k & 1));
}

double normal_at(std::uint64_t seed, std::uint64_t stream, std::uint64_t tag,
                 std::uint64_t index, std::uint64_t k) {
    return box_muller(seed, stream, position(tag, index, k >> 1),
                      static_cast<unsigned>(k & 1));
}

} // namespace rng
} // namespace sve
