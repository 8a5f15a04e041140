#include "mccir/rng.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace mccir {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

// ln(k!) — table below 31, Stirling series above (error < 1e-13 there).
double log_factorial(std::int64_t k) {
    static const std::array<double, 31> table = [] {
        std::array<double, 31> t{};
        long double acc = 0.0L;
        t[0] = 0.0;
        for (int i = 1; i < 31; ++i) {
            acc += std::log(static_cast<long double>(i));
            t[i] = static_cast<double>(acc);
        }
        return t;
    }();
    if (k < 31) return table[static_cast<std::size_t>(k)];
    const double n = static_cast<double>(k);
    const double inv = 1.0 / n;
    const double inv2 = inv * inv;
    return (n + 0.5) * std::log(n) - n + 0.918938533204672742 +
           inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 / 1260.0));
}

std::int64_t poisson_inversion(double mean, RngStream& rng) {
    const double u = rng.uniform01();
    double p = std::exp(-mean);
    double cum = p;
    std::int64_t k = 0;
    // mean < 10 keeps this loop short; the cap only guards against rounding
    // when u falls beyond the representable tail of the CDF.
    while (u >= cum && k < 400) {
        ++k;
        p *= mean / static_cast<double>(k);
        cum += p;
    }
    return k;
}

// Hörmann's transformed rejection with squeeze, exact for mean >= 10.
std::int64_t poisson_ptrs(double mean, RngStream& rng) {
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);

    for (;;) {
        const double u = rng.uniform01() - 0.5;
        const double v = rng.uniform01();
        const double us = 0.5 - std::fabs(u);
        const std::int64_t k =
            static_cast<std::int64_t>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
        if (us >= 0.07 && v <= v_r) return k;
        if (k < 0 || (us < 0.013 && v > us)) continue;
        if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
            static_cast<double>(k) * loglam - mean - log_factorial(k))
            return k;
    }
}

}  // namespace

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(state[1] * 5, 7) * 9;
    const std::uint64_t t = state[1] << 17;
    state[2] ^= state[0];
    state[3] ^= state[1];
    state[1] ^= state[2];
    state[0] ^= state[3];
    state[2] ^= t;
    state[3] = rotl(state[3], 45);
    return result;
}

double RngStream::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

RngStream derive_stream(std::uint64_t master_seed, std::uint64_t trial_index) {
    std::uint64_t x = master_seed ^ (0xd1342543de82ef95ULL * (trial_index + 1));
    RngStream s;
    s.state[0] = splitmix64(x);
    s.state[1] = splitmix64(x);
    s.state[2] = splitmix64(x);
    s.state[3] = splitmix64(x);
    if ((s.state[0] | s.state[1] | s.state[2] | s.state[3]) == 0) s.state[0] = 1;
    return s;
}

std::int64_t poisson_sample(double mean, RngStream& rng) {
    if (!(mean >= 0.0) || !std::isfinite(mean))
        throw std::invalid_argument("poisson_sample: mean must be finite and non-negative");
    if (mean == 0.0) return 0;
    if (mean < 10.0) return poisson_inversion(mean, rng);
    return poisson_ptrs(mean, rng);
}

double standard_normal(RngStream& rng) {
    if (rng.has_cached_normal) {
        rng.has_cached_normal = false;
        return rng.cached_normal;
    }
    double x, y, s;
    do {
        x = 2.0 * rng.uniform01() - 1.0;
        y = 2.0 * rng.uniform01() - 1.0;
        s = x * x + y * y;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    rng.cached_normal = y * f;
    rng.has_cached_normal = true;
    return x * f;
}

}  // namespace mccir
