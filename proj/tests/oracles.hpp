#pragma once

// Independent reference models shared by the unit and acceptance tests.

#include <cmath>
#include <array>
#include <complex>
#include <cstdint>

#include "fsqkd/protocol.hpp"

namespace fsqkd::oracle {

// Single-photon channel: n-photon yield Y_n = 1 - (1 - y0)(1 - eta)^n and error
// rate e_n = (e0 y0 + e_d (Y_n - y0)) / Y_n with e0 = 1/2.
struct YieldModel {
    double eta = 0.01;
    double y0 = 1e-6;
    double e_d = 0.01;

    double yield(int n) const { return 1.0 - (1.0 - y0) * std::pow(1.0 - eta, n); }
    double gain(double mu) const { return 1.0 - (1.0 - y0) * std::exp(-eta * mu); }
    double error_gain(double mu) const {
        return 0.5 * y0 * std::exp(-mu) + e_d * (gain(mu) - y0 * std::exp(-mu));
    }
};

// Expected tally for `pulses` pulses per basis with the given intensity split.
inline SiftedTally expected_tally(const YieldModel& m, double pulses, double mu1, double mu2,
                                  double p1, double e_x) {
    SiftedTally t;
    const double mu[2]{mu1, mu2};
    const double p[2]{p1, 1.0 - p1};
    for (int k = 0; k < 2; ++k) {
        const double q = m.gain(mu[k]);
        t.n_z[k] = static_cast<std::uint64_t>(std::llround(pulses * p[k] * q));
        t.m_z[k] = static_cast<std::uint64_t>(std::llround(pulses * p[k] * m.error_gain(mu[k])));
        t.n_x[k] = t.n_z[k];
        YieldModel x = m;
        x.e_d = e_x;
        t.m_x[k] = static_cast<std::uint64_t>(std::llround(pulses * p[k] * x.error_gain(mu[k])));
    }
    t.elapsed_s = 1.0;
    return t;
}

// Vacuum + weak one-decoy lower bound on Y_1 (Lo-Ma-Chen form, vacuum yield bounded
// from the decoy error gain), from gains rather than counts.
inline double y1_lower(double q1, double q2, double eq2, double mu1, double mu2) {
    const double y0_upper = 2.0 * eq2 * std::exp(mu2);
    return mu1 / (mu2 * (mu1 - mu2)) *
           (q2 * std::exp(mu2) - q1 * std::exp(mu1) * mu2 * mu2 / (mu1 * mu1) -
            (mu1 * mu1 - mu2 * mu2) / (mu1 * mu1) * y0_upper);
}

// Single-photon counts in one basis implied by the Y_1 bound.
inline double s1_lower(const YieldModel& m, double pulses, double mu1, double mu2, double p1) {
    const double tau1 = p1 * std::exp(-mu1) * mu1 + (1.0 - p1) * std::exp(-mu2) * mu2;
    return pulses * tau1 *
           y1_lower(m.gain(mu1), m.gain(mu2), m.error_gain(mu2), mu1, mu2);
}

inline double s1_true(const YieldModel& m, double pulses, double mu1, double mu2, double p1) {
    const double tau1 = p1 * std::exp(-mu1) * mu1 + (1.0 - p1) * std::exp(-mu2) * mu2;
    return pulses * tau1 * m.yield(1);
}

using cplx = std::complex<double>;

// Two couplers [[1,1],[1,-1]]/sqrt2 around a short and a long (tau, phi) arm.
// Returns [port][window] intensities for a fully coherent photon.
inline std::array<std::array<double, 3>, 2> two_path(cplx a_e, cplx a_l, double phi) {
    const double r = 1.0 / std::sqrt(2.0);
    std::array<cplx, 3> s{a_e * r, a_l * r, 0.0};
    std::array<cplx, 3> l{0.0, a_e * r * std::polar(1.0, phi), a_l * r * std::polar(1.0, phi)};
    std::array<std::array<double, 3>, 2> out{};
    for (int w = 0; w < 3; ++w) {
        out[0][w] = std::norm((s[w] + l[w]) * r);
        out[1][w] = std::norm((s[w] - l[w]) * r);
    }
    return out;
}

inline std::array<std::array<double, 3>, 2> two_path_incoherent(cplx a_e, cplx a_l) {
    const double r = 1.0 / std::sqrt(2.0);
    std::array<std::array<double, 3>, 2> out{};
    for (int port = 0; port < 2; ++port) {
        // No interference: powers of the two paths add.
        out[port][0] = std::norm(a_e * r * r);
        out[port][1] = std::norm(a_l * r * r) + std::norm(a_e * r * r);
        out[port][2] = std::norm(a_l * r * r);
    }
    return out;
}

}  // namespace fsqkd::oracle
