#pragma once

#include <cstddef>
#include <string>

#include "mccir/channel.hpp"

namespace mccir {

// Reference setup: 1e5 molecules per release, insulin-like diffusion in
// water, a 400 nm link, a 50 nm transparent receiver, 20% counting noise.
// symbol_duration is left unset; calibrate it or supply it in a config file.
PhysicalParams default_physical_params();

// Second-tap value the default symbol duration is calibrated against.
double default_second_tap();

struct CirConfig {
    PhysicalParams params;  // symbol_duration always set after loading
    std::size_t memory = 3;
};

// JSON config for the cir command. Recognized keys (all optional):
// n_tx, diffusion, distance, receiver_radius, noise_fraction, memory,
// symbol_duration, target_tap2. When symbol_duration is absent the duration
// is calibrated so tap 2 equals target_tap2 (default: the reference value).
CirConfig load_cir_config(const std::string& path);

// JSON prior: {"sigma2": x} plus an optional "cir" array of L+1 entries
// (taps then noise mean). Without "cir" the default physical CIR for the
// given memory is used.
ChannelPrior load_prior(const std::string& path, std::size_t memory);

// Plain-text vectors, one value per line; blank lines ignored.
TrainingSequence load_sequence(const std::string& path);
Observation load_observation(const std::string& path);

}  // namespace mccir
