#ifndef PRANK_RANDOM_HPP
#define PRANK_RANDOM_HPP

#include <cstdint>
#include <random>

namespace prank {

using Rng = std::mt19937_64;

// Independent stream for (seed, index). Used wherever work is split per
// example or per step so results do not depend on iteration order.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index, std::uint64_t salt = 0) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      static_cast<std::uint32_t>(salt), static_cast<std::uint32_t>(salt >> 32)};
    return Rng(seq);
}

}  // namespace prank

#endif  // PRANK_RANDOM_HPP
