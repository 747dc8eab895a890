#include "fsqkd/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace fsqkd {

std::uint64_t Rng::below(std::uint64_t n) {
    if (n <= 1) return 0;
    // Rejection keeps the draw unbiased for any n.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t w;
    do {
        w = engine_();
    } while (w >= limit);
    return w % n;
}

double Rng::normal() {
    const double u1 = uniform_pos();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double Rng::exponential(double rate) { return -std::log(uniform_pos()) / rate; }

std::uint64_t Rng::poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    if (mean >= 30.0) return poisson_ptrs(mean);
    double u = uniform();
    double p = std::exp(-mean);
    std::uint64_t k = 0;
    // Sequential search of the CDF; the tail guard covers u rounding past the last term.
    while (u > p && k < 1000) {
        u -= p;
        ++k;
        p *= mean / static_cast<double>(k);
    }
    return k;
}

std::uint64_t Rng::poisson_at_least_one(double mean) {
    if (!(mean > 0.0)) return 1;
    if (mean >= 30.0) {
        std::uint64_t k;
        do {
            k = poisson_ptrs(mean);
        } while (k == 0);
        return k;
    }
    // P(k | k >= 1) = e^-m m^k / k! / (1 - e^-m)
    double u = uniform() * -std::expm1(-mean);
    double p = std::exp(-mean) * mean;
    std::uint64_t k = 1;
    while (u > p && k < 1000) {
        u -= p;
        ++k;
        p *= mean / static_cast<double>(k);
    }
    return k;
}

std::uint64_t Rng::geometric_failures(double p) {
    if (p >= 1.0) return 0;
    if (!(p > 0.0)) return std::numeric_limits<std::uint64_t>::max();
    const double g = std::floor(std::log(uniform_pos()) / std::log1p(-p));
    if (g >= 1.8e19) return std::numeric_limits<std::uint64_t>::max();
    return static_cast<std::uint64_t>(g);
}

// Transformed rejection with squeeze (Hormann 1993).
std::uint64_t Rng::poisson_ptrs(double mean) {
    const double slam = std::sqrt(mean);
    const double loglam = std::log(mean);
    const double b = 0.931 + 2.53 * slam;
    const double a = -0.059 + 0.02483 * b;
    const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
    const double vr = 0.9277 - 3.6224 / (b - 2.0);
    for (;;) {
        const double u = uniform() - 0.5;
        const double v = uniform();
        const double us = 0.5 - std::fabs(u);
        const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
            -mean + k * loglam - std::lgamma(k + 1.0)) {
            return static_cast<std::uint64_t>(k);
        }
    }
}

}  // namespace fsqkd
