#include "mccir/channel.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mccir/errors.hpp"

namespace mccir {

namespace {

double std_normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

Vector CirVector::to_vector() const {
    Vector v(taps);
    v.push_back(noise_mean);
    return v;
}

CirVector CirVector::from_vector(const Vector& v) {
    if (v.empty()) throw std::invalid_argument("CirVector needs at least a noise entry");
    CirVector c;
    c.taps.assign(v.begin(), v.end() - 1);
    c.noise_mean = v.back();
    return c;
}

void validate(const PhysicalParams& p) {
    if (!(p.n_tx > 0.0) || !(p.diffusion > 0.0) || !(p.distance > 0.0) ||
        !(p.receiver_radius > 0.0))
        throw std::invalid_argument("physical parameters must be strictly positive");
    if (!(p.noise_fraction >= 0.0) || !(p.noise_fraction <= 1.0))
        throw std::invalid_argument("noise_fraction must lie in [0,1]");
}

double receiver_volume(const PhysicalParams& p) {
    return 4.0 / 3.0 * std::numbers::pi * std::pow(p.receiver_radius, 3);
}

double concentration(const PhysicalParams& p, double t) {
    validate(p);
    if (!(t > 0.0)) throw std::invalid_argument("concentration requires t > 0");
    const double denom = std::pow(4.0 * std::numbers::pi * p.diffusion * t, 1.5);
    return p.n_tx / denom * std::exp(-p.distance * p.distance / (4.0 * p.diffusion * t));
}

double peak_time(const PhysicalParams& p) {
    validate(p);
    return p.distance * p.distance / (6.0 * p.diffusion);
}

CirVector physical_cir(const PhysicalParams& p, std::size_t memory) {
    validate(p);
    if (memory < 1) throw std::invalid_argument("memory must be at least 1");
    if (!p.symbol_duration)
        throw std::invalid_argument("symbol_duration not set; calibrate it first");
    const double t_smp = peak_time(p);
    const double t_sym = *p.symbol_duration;
    const double vol = receiver_volume(p);

    CirVector cir;
    cir.taps.resize(memory);
    for (std::size_t l = 0; l < memory; ++l)
        cir.taps[l] = vol * concentration(p, t_smp + static_cast<double>(l) * t_sym);
    cir.noise_mean = p.noise_fraction * vol * concentration(p, t_smp);
    return cir;
}

double calibrate_symbol_duration(const PhysicalParams& p, double target_tap2) {
    validate(p);
    if (!(target_tap2 > 0.0)) throw std::invalid_argument("target tap must be positive");
    const double t_smp = peak_time(p);
    const double vol = receiver_volume(p);
    const auto tap_at = [&](double t_sym) { return vol * concentration(p, t_smp + t_sym); };

    const double tap1 = tap_at(0.0);
    if (target_tap2 > tap1)
        throw std::invalid_argument("target tap exceeds the peak count; unreachable");

    double lo = 0.0;
    double hi = t_smp;
    for (int i = 0; i < 200 && tap_at(hi) > target_tap2; ++i) hi *= 2.0;
    if (tap_at(hi) > target_tap2) throw NumericError("bisection bracket not found");

    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        if (tap_at(mid) > target_tap2)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= 1e-14 * hi) break;
    }
    return 0.5 * (lo + hi);
}

double symbol_duration_for_memory(const PhysicalParams& p, std::size_t memory, double cutoff) {
    if (memory < 1) throw std::invalid_argument("memory must be at least 1");
    if (!(cutoff > 0.0) || !(cutoff < 1.0))
        throw std::invalid_argument("cutoff must lie in (0,1)");
    const double tap1 = receiver_volume(p) * concentration(p, peak_time(p));
    // offset at which the expected count decays to cutoff*tap1; tap memory+1
    // samples at exactly memory symbol durations past the peak
    const double decay_offset = calibrate_symbol_duration(p, cutoff * tap1);
    return decay_offset / static_cast<double>(memory);
}

PriorMoments prior_moments(const ChannelPrior& prior) {
    if (!(prior.sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
    const Vector def = prior.default_cir.to_vector();
    const std::size_t n = def.size();

    PriorMoments mo;
    mo.mean.resize(n);
    Vector second(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double m = def[i];
        const double s = prior.sigma * m;
        if (s == 0.0) {
            mo.mean[i] = m;
            second[i] = m * m;
        } else {
            const double a = m / s;
            const double cdf = std_normal_cdf(a);
            const double pdf = std_normal_pdf(a);
            mo.mean[i] = m * cdf + s * pdf;
            second[i] = (m * m + s * s) * cdf + m * s * pdf;
        }
    }

    mo.second_moment = Matrix(n, n);
    mo.central_covariance = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double phi_ij = (i == j) ? second[i] : mo.mean[i] * mo.mean[j];
            mo.second_moment(i, j) = phi_ij;
            mo.central_covariance(i, j) = phi_ij - mo.mean[i] * mo.mean[j];
        }
    }
    return mo;
}

CirVector sample_prior(const ChannelPrior& prior, RngStream& rng) {
    if (!(prior.sigma >= 0.0)) throw std::invalid_argument("sigma must be non-negative");
    if (prior.sigma == 0.0) return prior.default_cir;
    const Vector def = prior.default_cir.to_vector();
    Vector out(def.size());
    for (std::size_t i = 0; i < def.size(); ++i) {
        const double x = def[i] + prior.sigma * def[i] * standard_normal(rng);
        out[i] = x > 0.0 ? x : 0.0;
    }
    return CirVector::from_vector(out);
}

DesignMatrix design_matrix(const TrainingSequence& seq, std::size_t memory) {
    const std::size_t k_total = seq.symbols.size();
    if (memory < 1) throw std::invalid_argument("memory must be at least 1");
    if (k_total < 2 * memory)
        throw std::invalid_argument("sequence too short: need K >= 2L");
    for (double s : seq.symbols)
        if (!(s >= 0.0) || !(s <= 1.0))
            throw std::invalid_argument("training symbols must lie in [0,1]");

    const std::size_t n_rows = k_total - memory + 1;
    DesignMatrix d;
    d.memory = memory;
    d.m = Matrix(n_rows, memory + 1);
    for (std::size_t i = 0; i < n_rows; ++i) {
        const std::size_t k = memory + i;  // 1-based interval index
        for (std::size_t j = 0; j < memory; ++j) d.m(i, j) = seq.symbols[k - j - 1];
        d.m(i, memory) = 1.0;
    }
    return d;
}

Observation simulate_observations(const CirVector& cir, const DesignMatrix& s_mat,
                                  RngStream& rng) {
    const Vector c = cir.to_vector();
    if (c.size() != s_mat.m.cols)
        throw std::invalid_argument("CIR length does not match the design matrix");
    Observation obs;
    obs.counts.resize(s_mat.m.rows);
    for (std::size_t i = 0; i < s_mat.m.rows; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < s_mat.m.cols; ++j) mean += s_mat.m(i, j) * c[j];
        obs.counts[i] = poisson_sample(mean, rng);
    }
    return obs;
}

}  // namespace mccir
