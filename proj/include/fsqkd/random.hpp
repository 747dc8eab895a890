#pragma once

// Seeded random streams for reproducible Monte Carlo.
//
// Every stochastic stage draws from its own std::mt19937_64 whose seed is
// derived from (scenario seed, stream tag, index...) through a SplitMix64
// chain, so results never depend on execution order or thread count.
// Distributions are implemented here rather than taken from <random>,
// whose distribution algorithms differ between standard libraries.

#include <cstdint>
#include <random>

namespace fsqkd {

enum class Stream : std::uint64_t {
    kPulseTrain = 0x5055'4c53,  // "PULS"
    kDetection = 0x4445'5443,   // "DETC"
    kTurbulence = 0x5455'5242,  // "TURB"
    kTracking = 0x5452'434b,    // "TRCK"
    kTrials = 0x5452'4c53,      // "TRLS"
    kTuning = 0x5455'4e45,      // "TUNE"
};

/// SplitMix64 output function (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t a = 0,
                                    std::uint64_t b = 0) noexcept {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ static_cast<std::uint64_t>(stream));
    h = mix64(h ^ a);
    return mix64(h ^ (b * 0xd1b54a32d192ed03ULL));
}

/// Counter-based draw: the value for (key, counter) is fixed, independent of call order.
constexpr std::uint64_t hash_at(std::uint64_t key, std::uint64_t counter) noexcept {
    return mix64(key + counter * 0x9e3779b97f4a7c15ULL);
}

/// Maps the top 53 bits of a word onto [0, 1).
constexpr double to_unit(std::uint64_t word) noexcept {
    return static_cast<double>(word >> 11) * 0x1.0p-53;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform on [0, 1).
    double uniform() { return to_unit(engine_()); }

    /// Uniform on (0, 1]; safe as a logarithm argument.
    double uniform_pos() { return 1.0 - uniform(); }

    bool bernoulli(double p) { return uniform() < p; }

    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller (one variate per call, no cached state).
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    double exponential(double rate);

    /// Poisson variate; inversion below mean 30, PTRS above.
    std::uint64_t poisson(double mean);

    /// Poisson variate conditioned on being >= 1.
    std::uint64_t poisson_at_least_one(double mean);

    /// Number of failures before the first success of Bernoulli(p) trials.
    std::uint64_t geometric_failures(double p);

private:
    std::uint64_t poisson_ptrs(double mean);

    std::mt19937_64 engine_;
};

}  // namespace fsqkd
