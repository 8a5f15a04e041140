#include "mccir/seqdesign.hpp"

#include <cstdint>
#include <stdexcept>

#include "mccir/errors.hpp"

namespace mccir {

namespace {

Matrix gram_of(const Matrix& s) {
    Matrix g(s.cols, s.cols);
    for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j1 = 0; j1 < s.cols; ++j1) {
            const double v = s(i, j1);
            if (v == 0.0) continue;
            for (std::size_t j2 = 0; j2 < s.cols; ++j2) g(j1, j2) += v * s(i, j2);
        }
    return g;
}

// Fill the stacked-window design of a binary sequence encoded in the low
// `length` bits of v, first symbol in the most significant bit.
void fill_design(Matrix& m, std::uint32_t v, std::size_t length, std::size_t memory) {
    const std::size_t rows = length - memory + 1;
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t k = memory + i;  // interval index, 1-based
        for (std::size_t j = 0; j < memory; ++j)
            m(i, j) = (v >> (length - k + j)) & 1u ? 1.0 : 0.0;
        m(i, memory) = 1.0;
    }
}

}  // namespace

TrainingSequence isi_free_sequence(std::size_t length, std::size_t memory, std::size_t k0) {
    if (memory < 1) throw std::invalid_argument("memory must be at least 1");
    if (k0 < 1 || k0 > memory + 1) throw std::invalid_argument("offset k0 must lie in [1, L+1]");
    TrainingSequence seq;
    seq.symbols.assign(length, 0.0);
    for (std::size_t k = k0; k <= length; k += memory + 1) seq.symbols[k - 1] = 1.0;
    return seq;
}

double lsse_criterion(const DesignMatrix& s_mat, const Vector& mean_cir) {
    const std::size_t n = s_mat.m.cols;
    if (mean_cir.size() != n)
        throw std::invalid_argument("mean CIR length does not match the design matrix");
    const Matrix ginv = invert_sym(gram_of(s_mat.m));
    const Matrix ginv2 = mat_mul(ginv, ginv);
    double acc = 0.0;
    for (std::size_t i = 0; i < s_mat.m.rows; ++i) {
        double quad = 0.0;
        double mean = 0.0;
        for (std::size_t j1 = 0; j1 < n; ++j1) {
            const double v = s_mat.m(i, j1);
            mean += v * mean_cir[j1];
            if (v == 0.0) continue;
            for (std::size_t j2 = 0; j2 < n; ++j2) quad += v * ginv2(j1, j2) * s_mat.m(i, j2);
        }
        acc += quad * mean;
    }
    return acc;
}

double lmmse_criterion(const DesignMatrix& s_mat, const PriorMoments& moments) {
    const std::size_t n = s_mat.m.cols;
    if (moments.mean.size() != n || moments.second_moment.rows != n)
        throw std::invalid_argument("prior moments do not match the design matrix");
    const Matrix sphi = mat_mul(s_mat.m, moments.second_moment);  // rows x n
    Matrix inner = mat_mul(sphi, transpose(s_mat.m));             // rows x rows
    const Vector smu = mat_vec(s_mat.m, moments.mean);
    for (std::size_t i = 0; i < inner.rows; ++i) inner(i, i) += smu[i];
    const Matrix x = solve_spd(inner, sphi);
    double acc = 0.0;
    for (std::size_t i = 0; i < sphi.data.size(); ++i) acc += sphi.data[i] * x.data[i];
    return acc;
}

SearchResult search_lsse(std::size_t length, std::size_t memory, const Vector& mean_cir,
                         double eps) {
    if (length > 24) throw std::invalid_argument("exhaustive search limited to length 24");
    if (length < 2 * memory) throw std::invalid_argument("sequence shorter than two memory spans");
    if (mean_cir.size() != memory + 1)
        throw std::invalid_argument("mean CIR length does not match the memory");

    DesignMatrix s_mat;
    s_mat.memory = memory;
    s_mat.m = Matrix(length - memory + 1, memory + 1);

    bool found = false;
    std::uint32_t best_v = 0;
    double best = 0.0;
    const std::uint64_t total = std::uint64_t{1} << length;
    for (std::uint64_t v = 0; v < total; ++v) {
        fill_design(s_mat.m, static_cast<std::uint32_t>(v), length, memory);
        const Vector eig = sym_eigenvalues(gram_of(s_mat.m));
        if (!(eig.front() > eps)) continue;
        const double crit = lsse_criterion(s_mat, mean_cir);
        if (!found || crit < best) {
            found = true;
            best = crit;
            best_v = static_cast<std::uint32_t>(v);
        }
    }
    if (!found) throw NumericError("no sequence satisfies the Gram eigenvalue threshold");

    SearchResult out;
    out.criterion = best;
    out.sequence.symbols.resize(length);
    for (std::size_t k = 1; k <= length; ++k)
        out.sequence.symbols[k - 1] = (best_v >> (length - k)) & 1u ? 1.0 : 0.0;
    return out;
}

SearchResult search_lmmse(std::size_t length, std::size_t memory, const PriorMoments& moments) {
    if (length > 24) throw std::invalid_argument("exhaustive search limited to length 24");
    if (length < 2 * memory) throw std::invalid_argument("sequence shorter than two memory spans");
    if (moments.mean.size() != memory + 1)
        throw std::invalid_argument("prior moments do not match the memory");

    DesignMatrix s_mat;
    s_mat.memory = memory;
    s_mat.m = Matrix(length - memory + 1, memory + 1);

    bool found = false;
    std::uint32_t best_v = 0;
    double best = 0.0;
    const std::uint64_t total = std::uint64_t{1} << length;
    for (std::uint64_t v = 0; v < total; ++v) {
        fill_design(s_mat.m, static_cast<std::uint32_t>(v), length, memory);
        const double crit = lmmse_criterion(s_mat, moments);
        if (!found || crit > best) {
            found = true;
            best = crit;
            best_v = static_cast<std::uint32_t>(v);
        }
    }
    if (!found) throw NumericError("empty search space");

    SearchResult out;
    out.criterion = best;
    out.sequence.symbols.resize(length);
    for (std::size_t k = 1; k <= length; ++k)
        out.sequence.symbols[k - 1] = (best_v >> (length - k)) & 1u ? 1.0 : 0.0;
    return out;
}

}  // namespace mccir
