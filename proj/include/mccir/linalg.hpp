#pragma once

#include <cstddef>
#include <vector>

#include "mccir/errors.hpp"

namespace mccir {

using Vector = std::vector<double>;

// Dense row-major matrix. Everything in this project is small (at most a few
// thousand rows and ~25 columns), so no attempt is made at blocking or views.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    static Matrix identity(std::size_t n);
};

Matrix mat_mul(const Matrix& a, const Matrix& b);
Vector mat_vec(const Matrix& a, const Vector& x);
Matrix transpose(const Matrix& a);

// Solve a·x = b for symmetric positive-definite a via Cholesky.
// a is symmetrized as (a + a^T)/2 after a 1e-10 relative symmetry check.
// Throws SingularMatrixError on a non-positive pivot.
Vector solve_spd(const Matrix& a, const Vector& b);
Matrix solve_spd(const Matrix& a, const Matrix& b);

// Inverse of a symmetric positive-definite matrix (solve against identity).
Matrix invert_sym(const Matrix& a);

// All eigenvalues of a symmetric matrix, ascending, via cyclic Jacobi.
Vector sym_eigenvalues(const Matrix& a);

// Shared plumbing: raises std::invalid_argument if a is not symmetric within
// 1e-10 relative tolerance, otherwise returns (a + a^T)/2.
Matrix symmetrize_checked(const Matrix& a);

}  // namespace mccir
