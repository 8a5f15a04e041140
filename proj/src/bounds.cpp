#include "mccir/bounds.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mccir/errors.hpp"
#include "mccir/rng.hpp"

namespace mccir {

namespace {

double trace(const Matrix& a) {
    double t = 0.0;
    for (std::size_t i = 0; i < a.rows && i < a.cols; ++i) t += a(i, i);
    return t;
}

void check_skips(std::size_t skipped, std::size_t n_samples) {
    if (skipped * 100 > n_samples)
        throw NumericError("more than 1% of prior draws had a degenerate Fisher matrix");
}

}  // namespace

Matrix fisher_matrix(const CirVector& cir, const DesignMatrix& s_mat) {
    const Vector c = cir.to_vector();
    const std::size_t n = s_mat.m.cols;
    if (c.size() != n) throw std::invalid_argument("CIR length does not match the design matrix");
    Matrix info(n, n);
    for (std::size_t i = 0; i < s_mat.m.rows; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += s_mat.m(i, j) * c[j];
        if (!(mean > 0.0))
            throw std::invalid_argument("Fisher information undefined: an interval mean is not positive");
        const double w = 1.0 / mean;
        for (std::size_t j1 = 0; j1 < n; ++j1) {
            const double v = s_mat.m(i, j1);
            if (v == 0.0) continue;
            for (std::size_t j2 = 0; j2 < n; ++j2) info(j1, j2) += w * v * s_mat.m(i, j2);
        }
    }
    return info;
}

double ccrb(const CirVector& cir, const DesignMatrix& s_mat) {
    return trace(invert_sym(fisher_matrix(cir, s_mat)));
}

MonteCarloBound expected_ccrb(const ChannelPrior& prior, const DesignMatrix& s_mat,
                              std::size_t n_samples, std::uint64_t seed) {
    if (n_samples < 100) throw std::invalid_argument("need at least 100 samples");
    MonteCarloBound out;
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n_eff = 0;
    for (std::size_t t = 0; t < n_samples; ++t) {
        RngStream stream = derive_stream(seed, t);
        const CirVector draw = sample_prior(prior, stream);
        double v;
        try {
            v = ccrb(draw, s_mat);
        } catch (const std::invalid_argument&) {
            ++out.skipped;
            continue;
        } catch (const SingularMatrixError&) {
            ++out.skipped;
            continue;
        }
        sum += v;
        sum_sq += v * v;
        ++n_eff;
    }
    check_skips(out.skipped, n_samples);
    out.value = sum / static_cast<double>(n_eff);
    if (n_eff > 1) {
        const double nd = static_cast<double>(n_eff);
        const double var = std::max(0.0, (sum_sq - nd * out.value * out.value) / (nd - 1.0));
        out.stderr_ = std::sqrt(var / nd);
    }
    return out;
}

MonteCarloBound bcrb(const ChannelPrior& prior, const DesignMatrix& s_mat, std::size_t n_samples,
                     std::uint64_t seed) {
    if (n_samples < 100) throw std::invalid_argument("need at least 100 samples");
    const PriorMoments moments = prior_moments(prior);
    Matrix precision;
    try {
        precision = invert_sym(moments.central_covariance);
    } catch (const SingularMatrixError&) {
        throw SingularMatrixError("prior covariance is singular; the Bayesian bound needs sigma > 0");
    }
    const std::size_t n = s_mat.m.cols;
    if (moments.mean.size() != n)
        throw std::invalid_argument("prior dimension does not match the design matrix");

    constexpr std::size_t kBatches = 20;
    std::vector<Matrix> batch_sum(kBatches, Matrix(n, n));
    std::vector<std::size_t> batch_cnt(kBatches, 0);
    MonteCarloBound out;
    for (std::size_t t = 0; t < n_samples; ++t) {
        RngStream stream = derive_stream(seed, t);
        const CirVector draw = sample_prior(prior, stream);
        Matrix info;
        try {
            info = fisher_matrix(draw, s_mat);
        } catch (const std::invalid_argument&) {
            ++out.skipped;
            continue;
        }
        Matrix& acc = batch_sum[t % kBatches];
        for (std::size_t i = 0; i < n * n; ++i) acc.data[i] += info.data[i];
        ++batch_cnt[t % kBatches];
    }
    check_skips(out.skipped, n_samples);

    const auto bound_of = [&](const Matrix& mean_info) {
        Matrix total = precision;
        for (std::size_t i = 0; i < n * n; ++i) total.data[i] += mean_info.data[i];
        return trace(invert_sym(total));
    };

    Matrix full_sum(n, n);
    std::size_t full_cnt = 0;
    for (std::size_t b = 0; b < kBatches; ++b) {
        for (std::size_t i = 0; i < n * n; ++i) full_sum.data[i] += batch_sum[b].data[i];
        full_cnt += batch_cnt[b];
    }
    if (full_cnt == 0) throw NumericError("no usable prior draws");
    Matrix mean_info = full_sum;
    for (double& v : mean_info.data) v /= static_cast<double>(full_cnt);
    out.value = bound_of(mean_info);

    std::vector<double> batch_values;
    for (std::size_t b = 0; b < kBatches; ++b) {
        if (batch_cnt[b] == 0) continue;
        Matrix m = batch_sum[b];
        for (double& v : m.data) v /= static_cast<double>(batch_cnt[b]);
        batch_values.push_back(bound_of(m));
    }
    if (batch_values.size() > 1) {
        double mean = 0.0;
        for (double v : batch_values) mean += v;
        mean /= static_cast<double>(batch_values.size());
        double ss = 0.0;
        for (double v : batch_values) ss += (v - mean) * (v - mean);
        const double nb = static_cast<double>(batch_values.size());
        out.stderr_ = std::sqrt(ss / (nb - 1.0) / nb);
    }
    return out;
}

}  // namespace mccir
