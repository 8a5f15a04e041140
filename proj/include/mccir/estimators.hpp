#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mccir/channel.hpp"
#include "mccir/linalg.hpp"

namespace mccir {

// Support pattern over the L+1 CIR components; bit i covers tap i+1 for
// i < L, bit L covers the noise term. Never empty.
struct SubsetMask {
    std::uint32_t bits = 0;
    std::size_t dim = 0;

    static SubsetMask full(std::size_t dim);
    bool contains(std::size_t i) const { return (bits >> i) & 1u; }
    std::size_t count() const;
    std::vector<std::size_t> indices() const;
};

struct EstimateResult {
    CirVector cir;
    SubsetMask active_subset;
    double objective = 0.0;  // log-likelihood for ML, penalized log-likelihood
                             // for MAP, squared residual norm for LSSE
    int solver_iterations = 0;
};

// Poisson log-likelihood sum over intervals: -mean + count*ln(mean) per row,
// with the 0*ln(0) term contributing zero and a positive count at zero mean
// giving -infinity.
double log_likelihood(const CirVector& cir, const Observation& r, const DesignMatrix& s_mat);
double log_likelihood(const Vector& c, const Observation& r, const DesignMatrix& s_mat);

// Stationary point of the reduced log-likelihood on the given support, found
// by damped Newton. The returned vector may contain negative entries (the
// caller decides feasibility). No-solution covers a rank-deficient reduced
// system, no stationary point, and ascents whose value certifies that any
// root would violate nonnegativity anyway.
std::optional<Vector> solve_subset_ml(const Observation& r, const DesignMatrix& s_mat,
                                      const SubsetMask& subset, int* iterations = nullptr);

// Constrained ML via support enumeration: full support first, then every
// smaller support by decreasing cardinality, keeping the non-negative
// candidate with the largest log-likelihood.
EstimateResult ml_estimate(const Observation& r, const DesignMatrix& s_mat);

// One unconstrained stationary-point solve, then clip at zero.
CirVector ml_suboptimal(const Observation& r, const DesignMatrix& s_mat);

// Constrained least squares via the same support enumeration with per-support
// closed-form normal equations; minimizes the squared residual norm.
EstimateResult lsse_estimate(const Observation& r, const DesignMatrix& s_mat);

// Single normal-equations solve, then clip at zero.
CirVector lsse_suboptimal(const Observation& r, const DesignMatrix& s_mat);

// Maximum a posteriori under the Gaussian approximation of the prior:
// support enumeration on log-likelihood minus 0.5*(c-mu)^T Sigma^{-1} (c-mu).
EstimateResult map_estimate(const Observation& r, const DesignMatrix& s_mat,
                            const PriorMoments& moments);

// Linear MMSE filter: Phi^T S^T (S Phi S^T + diag(S mu))^{-1}. The filter
// depends only on the design and prior, so it is computed once and reused
// across observations.
Matrix lmmse_matrix(const DesignMatrix& s_mat, const PriorMoments& moments);

// Filter application plus clip at zero.
CirVector lmmse_estimate(const Observation& r, const Matrix& f);

// Closed-form averaging estimator for sequences that release once every
// L+1 intervals: each observation sees at most one tap plus noise.
CirVector isi_free_estimate(const Observation& r, const TrainingSequence& seq,
                            std::size_t memory, std::size_t k0);

}  // namespace mccir
