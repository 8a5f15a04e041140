#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "mccir/linalg.hpp"
#include "mccir/rng.hpp"

namespace mccir {

// Free-diffusion point-release physics of the molecular link.
// Defaults are set by default_physical_params() in config_io.hpp.
struct PhysicalParams {
    double n_tx = 0.0;             // molecules per release
    double diffusion = 0.0;        // m^2/s
    double distance = 0.0;         // transmitter-receiver distance, m
    double receiver_radius = 0.0;  // m
    double noise_fraction = 0.0;   // external noise mean as fraction of tap 1
    std::optional<double> symbol_duration;  // s, unset until calibrated
};

// The estimation target: expected molecule counts of the L memory taps plus
// the external noise mean, all non-negative.
struct CirVector {
    std::vector<double> taps;
    double noise_mean = 0.0;

    std::size_t memory() const { return taps.size(); }
    Vector to_vector() const;  // [taps..., noise_mean]
    static CirVector from_vector(const Vector& v);
};

// Clipped-Gaussian channel model: c = [default + sigma*diag(default)*N(0,I)]^+.
struct ChannelPrior {
    CirVector default_cir;
    double sigma = 0.0;
};

struct PriorMoments {
    Vector mean;                // E{c}
    Matrix second_moment;       // E{c c^T}
    Matrix central_covariance;  // E{c c^T} - E{c}E{c}^T
};

struct TrainingSequence {
    std::vector<double> symbols;  // each in [0,1]; binary in the experiments
};

// Stacked windows of the training sequence, one row per usable interval
// k = L..K: [s[k], s[k-1], ..., s[k-L+1], 1]. The trailing ones column
// carries the noise mean.
struct DesignMatrix {
    Matrix m;  // (K-L+1) x (L+1)
    std::size_t memory = 0;

    std::size_t observations() const { return m.rows; }
};

struct Observation {
    std::vector<std::int64_t> counts;
};

void validate(const PhysicalParams& p);

double receiver_volume(const PhysicalParams& p);

// Molecule concentration at the receiver, t seconds after a point release.
double concentration(const PhysicalParams& p, double t);

// Time at which the concentration peaks: |a|^2/(6D).
double peak_time(const PhysicalParams& p);

// Expected counts: tap l samples at peak_time + (l-1)*symbol_duration, the
// noise mean is noise_fraction times the tap-1 count.
CirVector physical_cir(const PhysicalParams& p, std::size_t memory);

// Symbol duration such that tap 2 equals target_tap2, found by bisection on
// the decaying branch of the concentration curve.
double calibrate_symbol_duration(const PhysicalParams& p, double target_tap2);

// Symbol duration scaled to the memory depth: chosen so the first tap outside
// the window (tap memory+1) sits at cutoff times the peak tap. Deeper
// memories get proportionally shorter symbols; memory 3 with the default
// cutoff lands within 0.1% of calibrating tap 2 to its default count.
double symbol_duration_for_memory(const PhysicalParams& p, std::size_t memory,
                                  double cutoff = 0.05);

// Closed-form moments of the clipped-Gaussian prior (componentwise clipped
// normal; components independent).
PriorMoments prior_moments(const ChannelPrior& prior);

CirVector sample_prior(const ChannelPrior& prior, RngStream& rng);

DesignMatrix design_matrix(const TrainingSequence& seq, std::size_t memory);

// Independent Poisson counts with means S*c.
Observation simulate_observations(const CirVector& cir, const DesignMatrix& s_mat, RngStream& rng);

}  // namespace mccir
