#pragma once

#include <cstdint>

namespace mccir {

// xoshiro256** generator seeded through splitmix64. Parallel Monte Carlo
// trials use disjoint streams derived by hashing (master_seed, trial_index),
// so results do not depend on scheduling. Each stream is single-owner.
struct RngStream {
    std::uint64_t state[4] = {0x9e3779b97f4a7c15ULL, 1, 2, 3};
    bool has_cached_normal = false;
    double cached_normal = 0.0;

    std::uint64_t next_u64();
    double uniform01();  // in [0, 1), 53-bit resolution
};

RngStream derive_stream(std::uint64_t master_seed, std::uint64_t trial_index);

// Exact Poisson draw at any finite mean >= 0: sequential inversion below
// mean 10, transformed rejection with squeeze above. No normal approximation.
std::int64_t poisson_sample(double mean, RngStream& rng);

double standard_normal(RngStream& rng);

}  // namespace mccir
