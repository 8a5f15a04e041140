#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "mccir/channel.hpp"
#include "mccir/config_io.hpp"
#include "mccir/rng.hpp"

using namespace mccir;

namespace {

PhysicalParams calibrated_params() {
    PhysicalParams p = default_physical_params();
    p.symbol_duration = calibrate_symbol_duration(p, default_second_tap());
    return p;
}

}  // namespace

TEST_CASE("concentration decays toward zero at large times") {
    const PhysicalParams p = default_physical_params();
    const double tp = peak_time(p);
    // tail is polynomial: (tp/t)^{3/2} * exp(1.5 * (1 - tp/t))
    const double peak = concentration(p, tp);
    CHECK(concentration(p, 100.0 * tp) ==
          doctest::Approx(peak * std::pow(100.0, -1.5) * std::exp(1.5 * 0.99)).epsilon(1e-9));
    CHECK(concentration(p, 1e6 * tp) < 1e-8 * peak);
    CHECK(concentration(p, 1e12 * tp) < 1e-17 * peak);
}

TEST_CASE("concentration value at the peak") {
    const PhysicalParams p = default_physical_params();
    CHECK(concentration(p, peak_time(p)) == doctest::Approx(1.150245075741026e23).epsilon(1e-9));
}

TEST_CASE("concentration is linear in the released amount") {
    PhysicalParams p = default_physical_params();
    const double t = 2.0 * peak_time(p);
    const double base = concentration(p, t);
    p.n_tx *= 2.0;
    CHECK(concentration(p, t) == doctest::Approx(2.0 * base).epsilon(1e-12));
}

TEST_CASE("concentration rejects non-positive times") {
    const PhysicalParams p = default_physical_params();
    CHECK_THROWS_AS(concentration(p, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(concentration(p, -1.0), std::invalid_argument);
}

TEST_CASE("peak_time closed form and quadratic distance scaling") {
    PhysicalParams p = default_physical_params();
    CHECK(peak_time(p) == doctest::Approx(6.109201985490643e-05).epsilon(1e-12));
    const double base = peak_time(p);
    p.distance *= 2.0;
    CHECK(peak_time(p) == doctest::Approx(4.0 * base).epsilon(1e-12));
}

TEST_CASE("concentration is stationary at the peak time") {
    const PhysicalParams p = default_physical_params();
    const double t = peak_time(p);
    const double h = 1e-6 * t;
    const double deriv = (concentration(p, t + h) - concentration(p, t - h)) / (2.0 * h);
    CHECK(std::abs(deriv) * t / concentration(p, t) < 1e-6);
}

TEST_CASE("physical_cir reproduces the default channel") {
    const CirVector cir = physical_cir(calibrated_params(), 3);
    REQUIRE(cir.taps.size() == 3);
    CHECK(cir.taps[0] == doctest::Approx(60.22).epsilon(0.01));
    CHECK(cir.taps[1] == doctest::Approx(11.76).epsilon(0.01));
    CHECK(cir.taps[2] == doctest::Approx(5.13).epsilon(0.01));
    CHECK(cir.noise_mean == doctest::Approx(12.04).epsilon(0.01));
}

TEST_CASE("first tap does not depend on the symbol duration") {
    PhysicalParams p = default_physical_params();
    p.symbol_duration = 1e-4;
    const double a = physical_cir(p, 1).taps[0];
    p.symbol_duration = 5e-4;
    const double b = physical_cir(p, 1).taps[0];
    CHECK(a == b);
    CHECK(a == doctest::Approx(60.226691329597365).epsilon(1e-12));
}

TEST_CASE("physical_cir taps strictly decrease") {
    const CirVector cir = physical_cir(calibrated_params(), 5);
    for (std::size_t l = 0; l + 1 < cir.taps.size(); ++l) CHECK(cir.taps[l] > cir.taps[l + 1]);
}

TEST_CASE("zero noise fraction gives zero noise mean") {
    PhysicalParams p = calibrated_params();
    p.noise_fraction = 0.0;
    CHECK(physical_cir(p, 2).noise_mean == 0.0);
}

TEST_CASE("physical_cir requires a symbol duration") {
    PhysicalParams p = default_physical_params();
    CHECK_THROWS_AS(physical_cir(p, 3), std::invalid_argument);
}

TEST_CASE("calibrate_symbol_duration hits its target and cross-checks tap 3") {
    const PhysicalParams p = calibrated_params();
    CHECK(*p.symbol_duration > 0.0);
    const CirVector cir = physical_cir(p, 4);
    CHECK(cir.taps[1] == doctest::Approx(11.76).epsilon(1e-6));
    CHECK(cir.taps[2] == doctest::Approx(5.13).epsilon(0.01));
    // the tap just outside a 3-tap window sits below 5% of the peak tap
    CHECK(cir.taps[3] < 0.05 * cir.taps[0]);
}

TEST_CASE("calibrating to the peak count gives a vanishing duration") {
    PhysicalParams p = default_physical_params();
    p.symbol_duration = 1e-4;  // tap 1 is duration-independent
    const double tap1 = physical_cir(p, 1).taps[0];
    CHECK(calibrate_symbol_duration(p, tap1 * (1.0 - 1e-12)) < 1e-9);
}

TEST_CASE("calibrate_symbol_duration rejects unreachable targets") {
    const PhysicalParams p = default_physical_params();
    CHECK_THROWS_AS(calibrate_symbol_duration(p, 1e9), std::invalid_argument);
    CHECK_THROWS_AS(calibrate_symbol_duration(p, 0.0), std::invalid_argument);
}

TEST_CASE("symbol_duration_for_memory scales inversely with the memory depth") {
    const PhysicalParams p = default_physical_params();
    const double d1 = symbol_duration_for_memory(p, 1);
    const double d3 = symbol_duration_for_memory(p, 3);
    const double d5 = symbol_duration_for_memory(p, 5);
    CHECK(d1 == doctest::Approx(3.0 * d3).epsilon(1e-12));
    CHECK(d1 == doctest::Approx(5.0 * d5).epsilon(1e-12));
    // memory 3 lands within 0.1% of the tap-2 calibrated duration
    CHECK(d3 == doctest::Approx(calibrate_symbol_duration(p, default_second_tap())).epsilon(1e-3));
}

TEST_CASE("symbol_duration_for_memory puts the first excluded tap at the cutoff") {
    PhysicalParams p = default_physical_params();
    for (std::size_t memory : {1, 2, 5}) {
        p.symbol_duration = symbol_duration_for_memory(p, memory);
        const CirVector cir = physical_cir(p, memory + 1);
        CHECK(cir.taps[memory] == doctest::Approx(0.05 * cir.taps[0]).epsilon(1e-6));
    }
}

TEST_CASE("prior moments collapse at zero spread") {
    const CirVector def = physical_cir(calibrated_params(), 3);
    const PriorMoments mo = prior_moments(ChannelPrior{def, 0.0});
    const Vector d = def.to_vector();
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(mo.mean[i] == d[i]);
        for (std::size_t j = 0; j < d.size(); ++j) {
            CHECK(mo.second_moment(i, j) == doctest::Approx(d[i] * d[j]).epsilon(1e-12));
            CHECK(mo.central_covariance(i, j) == doctest::Approx(0.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("clip correction to the mean is tiny at spread 0.1") {
    const CirVector def = physical_cir(calibrated_params(), 3);
    const PriorMoments mo = prior_moments(ChannelPrior{def, std::sqrt(0.1)});
    const Vector d = def.to_vector();
    for (std::size_t i = 0; i < d.size(); ++i) {
        CHECK(mo.mean[i] > d[i]);  // clipping can only raise the mean
        CHECK(mo.mean[i] - d[i] < 1e-3 * d[i]);
    }
}

TEST_CASE("closed-form prior moments match Monte Carlo") {
    const CirVector def = physical_cir(calibrated_params(), 3);
    const ChannelPrior prior{def, std::sqrt(0.1)};
    const PriorMoments mo = prior_moments(prior);
    const std::size_t n = 1000000;
    RngStream g = derive_stream(101, 0);
    const std::size_t dim = def.to_vector().size();
    Vector sum(dim, 0.0), sum_sq(dim, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        const Vector c = sample_prior(prior, g).to_vector();
        for (std::size_t i = 0; i < dim; ++i) {
            sum[i] += c[i];
            sum_sq[i] += c[i] * c[i];
        }
    }
    for (std::size_t i = 0; i < dim; ++i) {
        const double mean = sum[i] / static_cast<double>(n);
        const double second = sum_sq[i] / static_cast<double>(n);
        const double var = second - mean * mean;
        const double se_mean = std::sqrt(var / static_cast<double>(n));
        CHECK(std::abs(mean - mo.mean[i]) < 3.0 * se_mean);
        // standard error of the second moment via its fourth-moment proxy
        const double se_second = std::sqrt(4.0 * second * var / static_cast<double>(n));
        CHECK(std::abs(second - mo.second_moment(i, i)) < 3.0 * se_second + 1e-9);
    }
}

TEST_CASE("sample_prior collapses at zero spread and never goes negative") {
    const CirVector def = physical_cir(calibrated_params(), 3);
    RngStream g = derive_stream(102, 0);
    const Vector fixed = sample_prior(ChannelPrior{def, 0.0}, g).to_vector();
    const Vector d = def.to_vector();
    for (std::size_t i = 0; i < d.size(); ++i) CHECK(fixed[i] == d[i]);

    const ChannelPrior wide{def, 2.0};
    for (int t = 0; t < 2000; ++t) {
        const Vector c = sample_prior(wide, g).to_vector();
        for (double v : c) CHECK(v >= 0.0);
    }
}

TEST_CASE("design_matrix direct two-interval case") {
    const DesignMatrix d = design_matrix(TrainingSequence{{1, 0}}, 1);
    REQUIRE(d.m.rows == 2);
    REQUIRE(d.m.cols == 2);
    CHECK(d.m(0, 0) == 1.0);
    CHECK(d.m(0, 1) == 1.0);
    CHECK(d.m(1, 0) == 0.0);
    CHECK(d.m(1, 1) == 1.0);
}

TEST_CASE("design_matrix windows the base training sequence") {
    const DesignMatrix d = design_matrix(TrainingSequence{{1, 1, 0, 0, 1, 0, 0, 1, 0, 1}}, 3);
    REQUIRE(d.m.rows == 8);
    REQUIRE(d.m.cols == 4);
    // interval k=4 sees window [s4, s3, s2] = [0, 0, 1]
    CHECK(d.m(1, 0) == 0.0);
    CHECK(d.m(1, 1) == 0.0);
    CHECK(d.m(1, 2) == 1.0);
    CHECK(d.m(1, 3) == 1.0);
    for (std::size_t i = 0; i < d.m.rows; ++i) CHECK(d.m(i, 3) == 1.0);
}

TEST_CASE("design_matrix rejects too-short sequences") {
    CHECK_THROWS_AS(design_matrix(TrainingSequence{{1, 0, 1}}, 2), std::invalid_argument);
}

TEST_CASE("an all-ones sequence is not identifiable") {
    const DesignMatrix d = design_matrix(TrainingSequence{{1, 1, 1, 1}}, 1);
    const Matrix gram = mat_mul(transpose(d.m), d.m);
    CHECK_THROWS_AS(invert_sym(gram), SingularMatrixError);
}

TEST_CASE("isi-free designs have at most one active tap per row") {
    const DesignMatrix d = design_matrix(TrainingSequence{{1, 0, 0, 1, 0, 0}}, 2);
    for (std::size_t i = 0; i < d.m.rows; ++i) {
        int nonzero = 0;
        for (std::size_t j = 0; j + 1 < d.m.cols; ++j) nonzero += d.m(i, j) != 0.0;
        CHECK(nonzero <= 1);
    }
}

TEST_CASE("simulate_observations with a zero channel is silent") {
    const DesignMatrix d = design_matrix(TrainingSequence{{1, 0, 1, 0}}, 1);
    CirVector zero;
    zero.taps = {0.0};
    zero.noise_mean = 0.0;
    RngStream g = derive_stream(103, 0);
    const Observation obs = simulate_observations(zero, d, g);
    for (auto c : obs.counts) CHECK(c == 0);
}

TEST_CASE("simulated counts match their Poisson means and are independent") {
    const DesignMatrix d = design_matrix(TrainingSequence{{1, 0}}, 1);
    CirVector cir;
    cir.taps = {3.0};
    cir.noise_mean = 2.0;
    const double m1 = 5.0, m2 = 2.0;
    const std::size_t n = 100000;
    RngStream g = derive_stream(104, 0);
    double s1 = 0, s2 = 0, sq1 = 0, sq2 = 0, cross = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const Observation obs = simulate_observations(cir, d, g);
        const double a = static_cast<double>(obs.counts[0]);
        const double b = static_cast<double>(obs.counts[1]);
        s1 += a;
        s2 += b;
        sq1 += a * a;
        sq2 += b * b;
        cross += a * b;
    }
    const double dn = static_cast<double>(n);
    const double mean1 = s1 / dn, mean2 = s2 / dn;
    const double var1 = sq1 / dn - mean1 * mean1, var2 = sq2 / dn - mean2 * mean2;
    CHECK(std::abs(mean1 - m1) < 4.0 * std::sqrt(m1 / dn));
    CHECK(std::abs(mean2 - m2) < 4.0 * std::sqrt(m2 / dn));
    // Poisson mean equals variance
    CHECK(var1 == doctest::Approx(m1).epsilon(0.05));
    CHECK(var2 == doctest::Approx(m2).epsilon(0.05));
    const double cov = cross / dn - mean1 * mean2;
    CHECK(std::abs(cov) < 4.0 * std::sqrt(var1 * var2 / dn));
}

TEST_CASE("simulate_observations rejects mismatched dimensions") {
    const DesignMatrix d = design_matrix(TrainingSequence{{1, 0}}, 1);
    CirVector cir;
    cir.taps = {1.0, 1.0};
    cir.noise_mean = 0.5;
    RngStream g = derive_stream(105, 0);
    CHECK_THROWS_AS(simulate_observations(cir, d, g), std::invalid_argument);
}
