#pragma once

#include <cstddef>
#include <cstdint>

#include "mccir/channel.hpp"
#include "mccir/linalg.hpp"

namespace mccir {

// Fisher information of the counting model: sum_k s_k s_k^T / (c^T s_k).
// Any interval with a non-positive mean leaves the information undefined.
Matrix fisher_matrix(const CirVector& cir, const DesignMatrix& s_mat);

// Trace of the inverse Fisher matrix (estimation-error lower bound for a
// fixed CIR).
double ccrb(const CirVector& cir, const DesignMatrix& s_mat);

struct MonteCarloBound {
    double value = 0.0;
    double stderr_ = 0.0;    // standard error of the Monte Carlo estimate
    std::size_t skipped = 0; // degenerate prior draws excluded from the average
};

// Prior-averaged bound E{ccrb} estimated over n_samples draws with per-sample
// derived streams, so the result is seed-deterministic. Draws with an
// undefined or singular Fisher matrix are skipped; more than 1% skips errors.
MonteCarloBound expected_ccrb(const ChannelPrior& prior, const DesignMatrix& s_mat,
                              std::size_t n_samples, std::uint64_t seed);

// Bayesian bound tr{(P + E{J})^{-1}}, with P the precision of the
// moment-matched Gaussian approximation of the prior and E{J} the Monte Carlo
// mean Fisher matrix. The standard error comes from 20 interleaved batch
// re-evaluations of the trace.
MonteCarloBound bcrb(const ChannelPrior& prior, const DesignMatrix& s_mat,
                     std::size_t n_samples, std::uint64_t seed);

}  // namespace mccir
