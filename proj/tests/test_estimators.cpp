#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mccir/channel.hpp"
#include "mccir/config_io.hpp"
#include "mccir/estimators.hpp"
#include "mccir/linalg.hpp"
#include "mccir/rng.hpp"

using namespace mccir;

namespace {

DesignMatrix toy_design() {  // rows [1,1] and [0,1]
    return design_matrix(TrainingSequence{{1, 0}}, 1);
}

Observation obs(std::vector<std::int64_t> counts) {
    Observation r;
    r.counts = std::move(counts);
    return r;
}

double sse_of(const Vector& c, const Observation& r, const DesignMatrix& d) {
    double sse = 0.0;
    for (std::size_t i = 0; i < d.m.rows; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < d.m.cols; ++j) m += d.m(i, j) * c[j];
        const double e = static_cast<double>(r.counts[i]) - m;
        sse += e * e;
    }
    return sse;
}

Vector likelihood_gradient(const Vector& c, const Observation& r, const DesignMatrix& d) {
    Vector grad(d.m.cols, 0.0);
    for (std::size_t i = 0; i < d.m.rows; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < d.m.cols; ++j) m += d.m(i, j) * c[j];
        const double rk = static_cast<double>(r.counts[i]);
        const double w = m > 0.0 ? rk / m - 1.0 : -1.0;  // rk == 0 whenever m == 0 here
        for (std::size_t j = 0; j < d.m.cols; ++j) grad[j] += w * d.m(i, j);
    }
    return grad;
}

double penalized_objective(const Vector& c, const Observation& r, const DesignMatrix& d,
                           const PriorMoments& mo) {
    const Matrix prec = invert_sym(mo.central_covariance);
    double quad = 0.0;
    const std::size_t n = mo.mean.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            quad += (c[i] - mo.mean[i]) * prec(i, j) * (c[j] - mo.mean[j]);
    return log_likelihood(c, r, d) - 0.5 * quad;
}

// Random identifiable instance: binary sequence, positive CIR, Poisson counts.
struct Instance {
    DesignMatrix design;
    Observation r;
};

Instance random_instance(RngStream& g, std::size_t memory, std::size_t length) {
    for (;;) {
        TrainingSequence seq;
        seq.symbols.resize(length);
        for (double& s : seq.symbols) s = g.uniform01() < 0.5 ? 0.0 : 1.0;
        const DesignMatrix d = design_matrix(seq, memory);
        const Matrix gram = mat_mul(transpose(d.m), d.m);
        if (sym_eigenvalues(gram).front() <= 1e-9) continue;
        Vector c(memory + 1);
        for (double& v : c) v = 0.3 + 2.2 * g.uniform01();
        Observation r;
        r.counts.resize(d.m.rows);
        for (std::size_t i = 0; i < d.m.rows; ++i) {
            double m = 0.0;
            for (std::size_t j = 0; j < d.m.cols; ++j) m += d.m(i, j) * c[j];
            r.counts[i] = poisson_sample(m, g);
        }
        return Instance{d, r};
    }
}

// Fine-grid reference over [0, max r]^dim for tiny instances. Rows are grouped
// by their 0/1 window pattern and means live on the step lattice, so the logs
// come from a table instead of per-point calls.
struct GridBest {
    double min_sse = std::numeric_limits<double>::infinity();
    double max_ll = -std::numeric_limits<double>::infinity();
};

GridBest grid_scan(const Observation& r, const DesignMatrix& d, double step) {
    REQUIRE(d.m.cols == 3);  // two taps plus noise
    double n_rows[4] = {0, 0, 0, 0}, count_sum[4] = {0, 0, 0, 0}, count_sq[4] = {0, 0, 0, 0};
    for (std::size_t i = 0; i < d.m.rows; ++i) {
        const int pat = (d.m(i, 0) != 0.0 ? 2 : 0) + (d.m(i, 1) != 0.0 ? 1 : 0);
        const double rk = static_cast<double>(r.counts[i]);
        n_rows[pat] += 1.0;
        count_sum[pat] += rk;
        count_sq[pat] += rk * rk;
    }
    std::int64_t max_r = 0;
    for (auto c : r.counts) max_r = std::max(max_r, c);
    const std::size_t n = static_cast<std::size_t>(std::llround(static_cast<double>(max_r) / step));
    std::vector<double> log_of(3 * n + 2);
    log_of[0] = 0.0;  // only referenced when the count sum is zero
    for (std::size_t q = 1; q < log_of.size(); ++q) log_of[q] = std::log(step * static_cast<double>(q));

    GridBest best;
    for (std::size_t i1 = 0; i1 <= n; ++i1)
        for (std::size_t i2 = 0; i2 <= n; ++i2)
            for (std::size_t j = 0; j <= n; ++j) {
                const std::size_t q[4] = {j, i2 + j, i1 + j, i1 + i2 + j};
                double sse = 0.0, ll = 0.0;
                bool valid = true;
                for (int p = 0; p < 4; ++p) {
                    if (n_rows[p] == 0.0) continue;
                    const double mean = step * static_cast<double>(q[p]);
                    sse += n_rows[p] * mean * mean - 2.0 * mean * count_sum[p] + count_sq[p];
                    if (q[p] == 0) {
                        if (count_sum[p] > 0.0) valid = false;
                    } else {
                        ll += -n_rows[p] * mean + count_sum[p] * log_of[q[p]];
                    }
                }
                best.min_sse = std::min(best.min_sse, sse);
                if (valid) best.max_ll = std::max(best.max_ll, ll);
            }
    return best;
}

}  // namespace

TEST_CASE("log_likelihood direct evaluations") {
    const DesignMatrix d = toy_design();
    // means [2, 1]: terms (-2 + 2 ln 2) + (-1 + 2 ln 1)
    CHECK(log_likelihood(Vector{1, 1}, obs({2, 2}), d) ==
          doctest::Approx(-3.0 + 2.0 * std::log(2.0)).epsilon(1e-12));
    // means [2, 2]: -4 + 4 ln 2
    CHECK(log_likelihood(Vector{0, 2}, obs({2, 2}), d) ==
          doctest::Approx(-4.0 + 4.0 * std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("log_likelihood boundary conventions") {
    const DesignMatrix d = toy_design();
    CHECK(log_likelihood(Vector{0, 0}, obs({0, 0}), d) == 0.0);
    CHECK(log_likelihood(Vector{0, 0}, obs({1, 0}), d) ==
          -std::numeric_limits<double>::infinity());
}

TEST_CASE("log_likelihood accepts the structured channel type") {
    CirVector c;
    c.taps = {1.0};
    c.noise_mean = 1.0;
    CHECK(log_likelihood(c, obs({2, 2}), toy_design()) ==
          doctest::Approx(-3.0 + 2.0 * std::log(2.0)));
}

TEST_CASE("solve_subset_ml solves the full-support toy system") {
    int iters = 0;
    const auto x = solve_subset_ml(obs({5, 2}), toy_design(), SubsetMask::full(2), &iters);
    REQUIRE(x.has_value());
    CHECK((*x)[0] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK((*x)[1] == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(iters >= 0);
}

TEST_CASE("solve_subset_ml on the noise-only support") {
    SubsetMask noise_only;
    noise_only.bits = 0b10;
    noise_only.dim = 2;
    // the solution comes back in reduced coordinates: one entry per active
    // component, here just the noise mean
    const auto x = solve_subset_ml(obs({0, 5}), toy_design(), noise_only);
    REQUIRE(x.has_value());
    REQUIRE(x->size() == 1);
    CHECK((*x)[0] == doctest::Approx(2.5).epsilon(1e-8));
}

TEST_CASE("solve_subset_ml reports no stationary point when counts cannot pin the support") {
    // only the second row carries a count and it excites just the noise column,
    // so the tap gradient is constant and the full support has no root
    const auto x = solve_subset_ml(obs({0, 5}), toy_design(), SubsetMask::full(2));
    CHECK(!x.has_value());
}

TEST_CASE("ml_estimate interior toy case") {
    const EstimateResult res = ml_estimate(obs({5, 2}), toy_design());
    CHECK(res.cir.taps[0] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(res.cir.noise_mean == doctest::Approx(2.0).epsilon(1e-8));
    CHECK(res.active_subset.count() == 2);
    CHECK(res.objective == doctest::Approx(log_likelihood(Vector{3, 2}, obs({5, 2}), toy_design()))
                               .epsilon(1e-9));
}

TEST_CASE("ml_estimate boundary toy case") {
    const EstimateResult res = ml_estimate(obs({0, 5}), toy_design());
    CHECK(res.cir.taps[0] == 0.0);  // inactive entries are exactly zero
    CHECK(res.cir.noise_mean == doctest::Approx(2.5).epsilon(1e-8));
    CHECK(!res.active_subset.contains(0));
    CHECK(res.active_subset.contains(1));
}

TEST_CASE("ml_estimate recovers a noiseless integer channel") {
    const EstimateResult res = ml_estimate(obs({7, 3}), toy_design());
    CHECK(res.cir.taps[0] == doctest::Approx(4.0).epsilon(1e-6));
    CHECK(res.cir.noise_mean == doctest::Approx(3.0).epsilon(1e-6));

    const DesignMatrix d = design_matrix(TrainingSequence{{1, 1, 0, 0, 1, 0, 0, 1, 0, 1}}, 3);
    const Vector c = {6, 3, 2, 1};
    Observation r;
    r.counts.resize(d.m.rows);
    for (std::size_t i = 0; i < d.m.rows; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < d.m.cols; ++j) m += d.m(i, j) * c[j];
        r.counts[i] = static_cast<std::int64_t>(std::llround(m));
    }
    const EstimateResult big = ml_estimate(r, d);
    const Vector got = big.cir.to_vector();
    for (std::size_t j = 0; j < c.size(); ++j) CHECK(got[j] == doctest::Approx(c[j]).epsilon(1e-6));
}

TEST_CASE("ml_estimate with no counts returns the zero channel") {
    const EstimateResult res = ml_estimate(obs({0, 0}), toy_design());
    CHECK(res.cir.taps[0] == 0.0);
    CHECK(res.cir.noise_mean == 0.0);
    CHECK(res.objective == 0.0);
}

TEST_CASE("ml solutions satisfy the boundary optimality conditions") {
    RngStream g = derive_stream(201, 0);
    for (int t = 0; t < 30; ++t) {
        const Instance inst = random_instance(g, 2, 6);
        const EstimateResult res = ml_estimate(inst.r, inst.design);
        const Vector c = res.cir.to_vector();
        const Vector grad = likelihood_gradient(c, inst.r, inst.design);
        for (std::size_t j = 0; j < c.size(); ++j) {
            if (c[j] > 0.0) {
                CHECK(std::abs(grad[j]) <= 1e-6);  // interior: stationary
            } else {
                CHECK(grad[j] <= 1e-6);  // boundary: no ascent into the orthant
            }
            if (!res.active_subset.contains(j)) CHECK(c[j] == 0.0);
        }
    }
}

TEST_CASE("ml_suboptimal toy cases and dominance") {
    CirVector sub = ml_suboptimal(obs({5, 2}), toy_design());
    CHECK(sub.taps[0] == doctest::Approx(3.0).epsilon(1e-8));
    CHECK(sub.noise_mean == doctest::Approx(2.0).epsilon(1e-8));

    sub = ml_suboptimal(obs({0, 5}), toy_design());
    CHECK(sub.taps[0] == 0.0);
    CHECK(sub.noise_mean == doctest::Approx(2.5).epsilon(1e-6));

    RngStream g = derive_stream(202, 0);
    for (int t = 0; t < 25; ++t) {
        const Instance inst = random_instance(g, 2, 6);
        const EstimateResult full = ml_estimate(inst.r, inst.design);
        const CirVector clipped = ml_suboptimal(inst.r, inst.design);
        CHECK(full.objective >= log_likelihood(clipped, inst.r, inst.design) - 1e-9);
    }
}

TEST_CASE("lsse_estimate toy cases") {
    EstimateResult res = lsse_estimate(obs({5, 2}), toy_design());
    CHECK(res.cir.taps[0] == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(res.cir.noise_mean == doctest::Approx(2.0).epsilon(1e-10));
    CHECK(res.objective == doctest::Approx(0.0).epsilon(1e-12));

    res = lsse_estimate(obs({0, 5}), toy_design());
    CHECK(res.cir.taps[0] == 0.0);
    CHECK(res.cir.noise_mean == doctest::Approx(2.5).epsilon(1e-10));
    CHECK(res.objective == doctest::Approx(12.5).epsilon(1e-10));
}

TEST_CASE("lsse_estimate is exact on noiseless data") {
    RngStream g = derive_stream(203, 0);
    const Instance shape = random_instance(g, 2, 8);
    const Vector c = {2.0, 1.0, 0.5};
    Observation r;
    r.counts.resize(shape.design.m.rows);
    for (std::size_t i = 0; i < shape.design.m.rows; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < 3; ++j) m += shape.design.m(i, j) * c[j];
        r.counts[i] = static_cast<std::int64_t>(std::llround(2.0 * m));
    }
    // doubled counts correspond to the doubled channel exactly
    const EstimateResult res = lsse_estimate(r, shape.design);
    const Vector got = res.cir.to_vector();
    for (std::size_t j = 0; j < 3; ++j) CHECK(got[j] == doctest::Approx(2.0 * c[j]).epsilon(1e-8));
}

TEST_CASE("lsse_suboptimal clips the unconstrained solution") {
    CirVector sub = lsse_suboptimal(obs({5, 2}), toy_design());
    CHECK(sub.taps[0] == doctest::Approx(3.0).epsilon(1e-10));
    CHECK(sub.noise_mean == doctest::Approx(2.0).epsilon(1e-10));

    sub = lsse_suboptimal(obs({0, 5}), toy_design());  // unconstrained root [-5, 5]
    CHECK(sub.taps[0] == 0.0);
    CHECK(sub.noise_mean == doctest::Approx(5.0).epsilon(1e-10));
}

TEST_CASE("constrained least squares never loses to the clipped shortcut") {
    RngStream g = derive_stream(204, 0);
    for (int t = 0; t < 25; ++t) {
        const Instance inst = random_instance(g, 2, 6);
        const EstimateResult full = lsse_estimate(inst.r, inst.design);
        const CirVector clipped = lsse_suboptimal(inst.r, inst.design);
        CHECK(full.objective <= sse_of(clipped.to_vector(), inst.r, inst.design) + 1e-9);
    }
}

TEST_CASE("subset searches match a dense grid reference") {
    RngStream g = derive_stream(205, 0);
    for (int t = 0; t < 12; ++t) {
        const Instance inst = random_instance(g, 2, 6);
        const GridBest ref = grid_scan(inst.r, inst.design, 0.05);
        const EstimateResult ls = lsse_estimate(inst.r, inst.design);
        CHECK(ls.objective <= ref.min_sse + 1e-3);
        const EstimateResult ml = ml_estimate(inst.r, inst.design);
        CHECK(ml.objective >= ref.max_ll - 1e-3);
    }
}

TEST_CASE("map_estimate approaches maximum likelihood under a weak prior") {
    CirVector def;
    def.taps = {3.0};
    def.noise_mean = 2.0;
    const PriorMoments weak = prior_moments(ChannelPrior{def, 1e4});
    const EstimateResult map = map_estimate(obs({5, 2}), toy_design(), weak);
    CHECK(map.cir.taps[0] == doctest::Approx(3.0).epsilon(1e-3));
    CHECK(map.cir.noise_mean == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("map_estimate maximizes the penalized objective") {
    CirVector def;
    def.taps = {3.0};
    def.noise_mean = 2.0;
    const PriorMoments mo = prior_moments(ChannelPrior{def, std::sqrt(0.1)});
    const DesignMatrix d = toy_design();
    RngStream g = derive_stream(206, 0);
    for (const auto& counts : std::vector<std::vector<std::int64_t>>{{5, 2}, {0, 5}, {9, 1}}) {
        const Observation r = obs(std::vector<std::int64_t>(counts));
        const EstimateResult map = map_estimate(r, d, mo);
        CHECK(map.objective ==
              doctest::Approx(penalized_objective(map.cir.to_vector(), r, d, mo)).epsilon(1e-9));
        const EstimateResult ml = ml_estimate(r, d);
        CHECK(map.objective >= penalized_objective(ml.cir.to_vector(), r, d, mo) - 1e-9);
        CHECK(map.objective >= penalized_objective(mo.mean, r, d, mo) - 1e-9);
    }
    (void)g;
}

TEST_CASE("map_estimate requires a spread prior") {
    CirVector def;
    def.taps = {3.0};
    def.noise_mean = 2.0;
    const PriorMoments degenerate = prior_moments(ChannelPrior{def, 0.0});
    CHECK_THROWS_AS(map_estimate(obs({5, 2}), toy_design(), degenerate), SingularMatrixError);
}

TEST_CASE("lmmse_matrix closed-form two by two case") {
    CirVector def;
    def.taps = {3.0};
    def.noise_mean = 2.0;
    const PriorMoments mo = prior_moments(ChannelPrior{def, 0.0});
    const Matrix f = lmmse_matrix(toy_design(), mo);
    REQUIRE(f.rows == 2);
    REQUIRE(f.cols == 2);
    CHECK(f(0, 0) == doctest::Approx(0.375).epsilon(1e-10));
    CHECK(f(0, 1) == doctest::Approx(0.375).epsilon(1e-10));
    CHECK(f(1, 0) == doctest::Approx(0.25).epsilon(1e-10));
    CHECK(f(1, 1) == doctest::Approx(0.25).epsilon(1e-10));
}

TEST_CASE("lmmse_matrix satisfies its defining equation") {
    PhysicalParams p = default_physical_params();
    p.symbol_duration = symbol_duration_for_memory(p, 3);
    const CirVector def = physical_cir(p, 3);
    const PriorMoments mo = prior_moments(ChannelPrior{def, std::sqrt(0.1)});
    const DesignMatrix d = design_matrix(TrainingSequence{{1, 1, 0, 0, 1, 0, 0, 1, 0, 1}}, 3);
    const Matrix f = lmmse_matrix(d, mo);

    Matrix sphi = mat_mul(d.m, mo.second_moment);
    Matrix inner = mat_mul(sphi, transpose(d.m));
    const Vector smu = mat_vec(d.m, mo.mean);
    for (std::size_t i = 0; i < inner.rows; ++i) inner(i, i) += smu[i];
    const Matrix lhs = mat_mul(f, inner);
    const Matrix rhs = transpose(sphi);
    double err = 0.0;
    for (std::size_t i = 0; i < lhs.data.size(); ++i)
        err = std::max(err, std::abs(lhs.data[i] - rhs.data[i]));
    CHECK(err < 1e-9);
}

TEST_CASE("lmmse_estimate applies the filter and clips") {
    CirVector def;
    def.taps = {3.0};
    def.noise_mean = 2.0;
    const Matrix f = lmmse_matrix(toy_design(), prior_moments(ChannelPrior{def, 0.0}));
    const CirVector est = lmmse_estimate(obs({5, 2}), f);
    CHECK(est.taps[0] == doctest::Approx(2.625).epsilon(1e-10));
    CHECK(est.noise_mean == doctest::Approx(1.75).epsilon(1e-10));

    const CirVector zero = lmmse_estimate(obs({0, 0}), f);
    CHECK(zero.taps[0] == 0.0);
    CHECK(zero.noise_mean == 0.0);

    Matrix neg(2, 2);
    neg(0, 0) = -1.0;
    neg(0, 1) = 0.25;
    neg(1, 0) = 0.5;
    neg(1, 1) = -0.125;
    const CirVector clipped = lmmse_estimate(obs({4, 1}), neg);
    CHECK(clipped.taps[0] == 0.0);
    CHECK(clipped.noise_mean >= 0.0);
}

TEST_CASE("isi_free_estimate hand-averaged case") {
    const TrainingSequence seq{{1, 0, 1, 0}};
    const CirVector est = isi_free_estimate(obs({10, 2, 8, 4}), seq, 1, 1);
    CHECK(est.noise_mean == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(est.taps[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("isi_free_estimate with flat counts sees only noise") {
    const TrainingSequence seq{{1, 0, 1, 0}};
    const CirVector est = isi_free_estimate(obs({4, 4, 4, 4}), seq, 1, 1);
    CHECK(est.taps[0] == 0.0);
    CHECK(est.noise_mean == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("isi_free_estimate recovers exact class means") {
    const TrainingSequence seq{{1, 0, 0, 1, 0, 0}};
    // channel [7, 4, 2]: interval means are 6,2,9,6,2 for k=2..6
    const CirVector est = isi_free_estimate(obs({6, 2, 9, 6, 2}), seq, 2, 1);
    CHECK(est.taps[0] == doctest::Approx(7.0).epsilon(1e-12));
    CHECK(est.taps[1] == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(est.noise_mean == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("isi_free_estimate rejects sequences off the release pattern") {
    const TrainingSequence seq{{1, 1, 0, 0}};
    CHECK_THROWS_AS(isi_free_estimate(obs({1, 1, 1, 1}), seq, 1, 1), std::invalid_argument);
    const TrainingSequence ok{{1, 0, 1, 0}};
    CHECK_THROWS_AS(isi_free_estimate(obs({1, 1, 1, 1}), ok, 1, 3), std::invalid_argument);
}

TEST_CASE("estimators are deterministic") {
    RngStream g = derive_stream(207, 0);
    const Instance inst = random_instance(g, 2, 8);
    const EstimateResult a = ml_estimate(inst.r, inst.design);
    const EstimateResult b = ml_estimate(inst.r, inst.design);
    CHECK(a.cir.to_vector() == b.cir.to_vector());
    CHECK(a.objective == b.objective);
    CHECK(a.active_subset.bits == b.active_subset.bits);
}
