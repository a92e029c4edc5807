// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace coop {

using Rng = std::mt19937_64;

inline double draw_normal(Rng& rng, double mean, double stddev)
{
    if (stddev <= 0.0) return mean;
    return std::normal_distribution<double>(mean, stddev)(rng);
}

inline double draw_uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline bool draw_bernoulli(Rng& rng, double p)
{
    return std::bernoulli_distribution(p)(rng);
}

/// Derives an independent stream from a base seed and a stream tag.
inline Rng make_stream(std::uint64_t seed, std::uint64_t stream)
{
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return Rng(seq);
}

}  // namespace coop
