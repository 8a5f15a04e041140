#include "mccir/linalg.hpp"

#include <cmath>
#include <algorithm>
#include <stdexcept>

namespace mccir {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix mat_mul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw std::invalid_argument("mat_mul: inner dimensions disagree");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
        }
    }
    return out;
}

Vector mat_vec(const Matrix& a, const Vector& x) {
    if (a.cols != x.size()) throw std::invalid_argument("mat_vec: dimensions disagree");
    Vector out(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += a(i, j) * x[j];
        out[i] = acc;
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

Matrix symmetrize_checked(const Matrix& a) {
    if (a.rows != a.cols) throw std::invalid_argument("expected a square matrix");
    double scale = 0.0;
    for (double v : a.data) {
        if (!std::isfinite(v)) throw std::invalid_argument("matrix has non-finite entries");
        scale = std::max(scale, std::fabs(v));
    }
    const double tol = 1e-10 * std::max(scale, 1e-300);
    Matrix out(a.rows, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            if (std::fabs(a(i, j) - a(j, i)) > tol)
                throw std::invalid_argument("matrix is not symmetric");
            out(i, j) = 0.5 * (a(i, j) + a(j, i));
        }
    }
    return out;
}

namespace {

// Lower-triangular Cholesky factor, stored in place of the input.
// The pivot threshold is relative to the largest diagonal entry so that
// Gram matrices of 0/1 sequences of any count scale behave the same.
Matrix cholesky(const Matrix& spd) {
    const std::size_t n = spd.rows;
    double max_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, spd(i, i));
    const double pivot_tol = 1e-12 * std::max(max_diag, 1e-300);

    Matrix l(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        double d = spd(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
        if (!(d > pivot_tol)) throw SingularMatrixError("non-positive pivot in Cholesky factorization");
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = spd(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            l(i, j) = s / ljj;
        }
    }
    return l;
}

Vector cholesky_solve(const Matrix& l, const Vector& b) {
    const std::size_t n = l.rows;
    Vector y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * y[k];
        y[i] = s / l(i, i);
    }
    Vector x(n);
    for (std::size_t ii = n; ii-- > 0;) {
        double s = y[ii];
        for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * x[k];
        x[ii] = s / l(ii, ii);
    }
    return x;
}

}  // namespace

Vector solve_spd(const Matrix& a, const Vector& b) {
    if (a.rows != b.size()) throw std::invalid_argument("solve_spd: dimensions disagree");
    const Matrix sym = symmetrize_checked(a);
    return cholesky_solve(cholesky(sym), b);
}

Matrix solve_spd(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw std::invalid_argument("solve_spd: dimensions disagree");
    const Matrix sym = symmetrize_checked(a);
    const Matrix l = cholesky(sym);
    Matrix x(b.rows, b.cols);
    Vector col(b.rows);
    for (std::size_t j = 0; j < b.cols; ++j) {
        for (std::size_t i = 0; i < b.rows; ++i) col[i] = b(i, j);
        const Vector xj = cholesky_solve(l, col);
        for (std::size_t i = 0; i < b.rows; ++i) x(i, j) = xj[i];
    }
    return x;
}

Matrix invert_sym(const Matrix& a) {
    Matrix inv = solve_spd(a, Matrix::identity(a.rows));
    for (std::size_t i = 0; i < inv.rows; ++i)
        for (std::size_t j = i + 1; j < inv.cols; ++j) {
            const double v = 0.5 * (inv(i, j) + inv(j, i));
            inv(i, j) = v;
            inv(j, i) = v;
        }
    return inv;
}

Vector sym_eigenvalues(const Matrix& a) {
    Matrix m = symmetrize_checked(a);
    const std::size_t n = m.rows;
    if (n == 0) return {};

    double frob2 = 0.0;
    for (double v : m.data) frob2 += v * v;
    const double stop = 1e-28 * std::max(frob2, 1e-300);

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off2 = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off2 += 2.0 * m(p, q) * m(p, q);
        if (off2 <= stop) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = m(p, q);
                if (apq == 0.0) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
            }
        }
    }

    Vector eig(n);
    for (std::size_t i = 0; i < n; ++i) eig[i] = m(i, i);
    std::sort(eig.begin(), eig.end());
    return eig;
}

}  // namespace mccir
