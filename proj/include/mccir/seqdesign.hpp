#pragma once

#include <cstddef>

#include "mccir/channel.hpp"
#include "mccir/linalg.hpp"

namespace mccir {

// One release every L+1 intervals starting at position k0, so every observed
// interval sees at most one tap plus the noise floor.
TrainingSequence isi_free_sequence(std::size_t length, std::size_t memory, std::size_t k0);

// Analytic expected squared error norm of the clipping-free least-squares
// estimator: sum_k [S (S^T S)^{-2} S^T]_kk * (S mu)_k, computed row-wise.
double lsse_criterion(const DesignMatrix& s_mat, const Vector& mean_cir);

// Prior second-moment mass captured by the linear MMSE filter,
// tr{Phi^T S^T (S Phi S^T + diag{S mu})^{-1} S Phi}; the estimator's
// mean squared error is tr{Phi} minus this, so bigger is better.
double lmmse_criterion(const DesignMatrix& s_mat, const PriorMoments& moments);

struct SearchResult {
    TrainingSequence sequence;
    double criterion = 0.0;
};

// Exhaustive minimization of lsse_criterion over binary sequences of the
// given length whose Gram eigenvalues all exceed eps. Ties go to the smallest
// sequence read as a binary number (first symbol = most significant bit).
SearchResult search_lsse(std::size_t length, std::size_t memory, const Vector& mean_cir,
                         double eps = 1e-9);

// Exhaustive maximization of lmmse_criterion over binary sequences; same
// tie-break.
SearchResult search_lmmse(std::size_t length, std::size_t memory, const PriorMoments& moments);

}  // namespace mccir
