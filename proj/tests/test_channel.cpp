#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

#include "fsqkd/channel.hpp"
#include "fsqkd/errors.hpp"

using namespace fsqkd;

namespace {

// Midpoint quadrature of the Gaussian intensity profile over a disc.
double aperture_quadrature(double w, double d) {
    const int n = 20000;
    const double r_max = d / 2.0;
    const double h = r_max / n;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const double r = (i + 0.5) * h;
        sum += std::exp(-2.0 * r * r / (w * w)) * 2.0 * std::numbers::pi * r * h;
    }
    return sum * 2.0 / (std::numbers::pi * w * w);
}

}  // namespace

TEST(channel, beam_radius_limits) {
    BeamParams b;
    b.wavelength_m = 1550e-9;
    EXPECT_DOUBLE_EQ(beam_radius(0.0, b), b.waist_radius_m);
    const double zr = rayleigh_range(b);
    EXPECT_NEAR(beam_radius(zr, b), b.waist_radius_m * std::sqrt(2.0), 1e-15);
    const double z = 1000.0 * zr;
    const double far = z * b.wavelength_m / (std::numbers::pi * b.waist_radius_m);
    EXPECT_NEAR(beam_radius(z, b) / far, 1.0, 0.01);
    EXPECT_NEAR(beam_radius(500.0, b), 35.93e-3, 0.01e-3);
    EXPECT_THROW(beam_radius(-1.0, b), ContractViolation);
}

TEST(channel, aperture_transmission_matches_quadrature) {
    for (double w : {5e-3, 17.5e-3, 35e-3, 70e-3}) {
        EXPECT_NEAR(aperture_transmission(w, 35e-3), aperture_quadrature(w, 35e-3), 1e-7) << "w=" << w;
    }
    EXPECT_NEAR(aperture_transmission(35e-3, 35e-3), 1.0 - std::exp(-0.5), 1e-15);
    EXPECT_DOUBLE_EQ(aperture_transmission(1e-3, 1.0), 1.0);
}

TEST(channel, db_conversions) {
    EXPECT_NEAR(db_to_fraction(3.0), 0.501187, 1e-6);
    EXPECT_NEAR(fraction_to_db(db_to_fraction(16.5)), 16.5, 1e-12);
    EXPECT_DOUBLE_EQ(db_to_fraction(0.0), 1.0);
}

TEST(channel, link_budget) {
    LinkBudget b;
    b.add("window_glass", 3.0);
    b.add("smf_coupling", 4.0);
    EXPECT_DOUBLE_EQ(b.total_db(), 7.0);
    EXPECT_NEAR(b.transmittance(), db_to_fraction(7.0), 1e-15);
    EXPECT_EQ(b.component("smf_coupling").value_or(-1.0), 4.0);
    EXPECT_FALSE(b.component("missing").has_value());
    EXPECT_THROW(b.add("gain", -1.0), ConfigError);
    EXPECT_THROW(b.add("nan", std::nan("")), ConfigError);
}

TEST(channel, turbulence_inversion_500m) {
    const auto e = estimate_turbulence(2.12e-4, 1310e-9, 500.0);
    EXPECT_NEAR(e.cn2 / 7.71e-17, 1.0, 0.03);
    ASSERT_TRUE(e.fried_m.has_value());
    EXPECT_NEAR(*e.fried_m / 0.85, 1.0, 0.03);
    EXPECT_EQ(e.regime, Regime::kWeak);
}

TEST(channel, turbulence_forward_and_inverse_agree) {
    const double cn2 = 3e-15;
    const double s = log_variance_from_cn2(cn2, 1550e-9, 1000.0);
    EXPECT_NEAR(cn2_from_log_variance(s, 1550e-9, 1000.0) / cn2, 1.0, 1e-12);
}

TEST(channel, fried_parameter_infinite_resolution) {
    EXPECT_THROW(fried_parameter(0.0, 1310e-9, 500.0), InfiniteResolution);
    const auto e = estimate_turbulence(0.0, 1310e-9, 500.0);
    EXPECT_FALSE(e.fried_m.has_value());
    EXPECT_EQ(e.cn2, 0.0);
}

TEST(channel, regime_threshold) {
    EXPECT_EQ(classify_regime(0.99), Regime::kWeak);
    EXPECT_EQ(classify_regime(1.0), Regime::kModerateToStrong);
}

TEST(channel, moments_and_errors) {
    std::vector<double> x{1.0, 2.0, 3.0, 4.0};
    const auto m = intensity_moments(x);
    EXPECT_DOUBLE_EQ(m.mean, 2.5);
    EXPECT_DOUBLE_EQ(m.variance, 1.25);
    EXPECT_DOUBLE_EQ(scintillation_index(x), 1.25 / 6.25);
    std::vector<double> one{1.0};
    EXPECT_THROW(intensity_moments(one), StatisticError);
    std::vector<double> zeros{0.0, 0.0};
    EXPECT_THROW(scintillation_index(zeros), StatisticError);
    std::vector<double> flat(10, 2.0);
    EXPECT_EQ(scintillation_index(flat), 0.0);
}

TEST(channel, synthesis_reproduces_targets) {
    TurbulenceParams p;
    p.target_scintillation = 2.12e-4;
    p.wander_std_m = 94.25e-6;
    p.wander_aspect = 0.52;
    p.mean_transmittance = 0.1;
    Rng rng(3);
    const auto s = synthesize_turbulence(p, 200.0, 1e-3, rng);
    ASSERT_EQ(s.size(), 200000U);
    EXPECT_NEAR(scintillation_index(s.intensity) / p.target_scintillation, 1.0, 0.10);
    EXPECT_NEAR(intensity_moments(s.intensity).mean, 1.0, 1e-3);
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        sx += s.offset_x_m[i] * s.offset_x_m[i];
        sy += s.offset_y_m[i] * s.offset_y_m[i];
        EXPECT_NEAR(s.transmittance[i], 0.1 * s.intensity[i], 1e-15);
    }
    EXPECT_NEAR(std::sqrt(sx / s.size()) / p.wander_std_m, 1.0, 0.05);
    EXPECT_NEAR(std::sqrt(sy / s.size()) / (p.wander_std_m * 0.52), 1.0, 0.05);
}

TEST(channel, synthesis_is_stationary) {
    TurbulenceParams p;
    p.target_scintillation = 0.05;
    Rng rng(4);
    const auto s = synthesize_turbulence(p, 400.0, 1e-3, rng);
    const std::size_t half = s.size() / 2;
    const std::vector<double> a(s.intensity.begin(), s.intensity.begin() + half);
    const std::vector<double> b(s.intensity.begin() + half, s.intensity.end());
    EXPECT_NEAR(scintillation_index(a) / scintillation_index(b), 1.0, 0.15);
}

TEST(channel, synthesis_round_trip_through_cn2) {
    for (double target : {3.1e-5, 2.12e-4, 0.02}) {
        TurbulenceParams p;
        p.target_scintillation = target;
        Rng rng(5);
        const auto s = synthesize_turbulence(p, 200.0, 1e-3, rng);
        const auto e = estimate_turbulence(s.intensity, 1310e-9, 500.0);
        const double expect = estimate_turbulence(target, 1310e-9, 500.0).cn2;
        EXPECT_NEAR(e.cn2 / expect, 1.0, 0.10) << "target=" << target;
    }
}

TEST(channel, synthesis_without_turbulence_is_constant) {
    TurbulenceParams p;
    Rng rng(6);
    const auto s = synthesize_turbulence(p, 1.0, 1e-3, rng);
    for (double v : s.intensity) EXPECT_EQ(v, 1.0);
    EXPECT_EQ(scintillation_index(s.intensity), 0.0);
}

TEST(channel, synthesis_rejects_bad_input) {
    TurbulenceParams p;
    Rng rng(7);
    EXPECT_THROW(synthesize_turbulence(p, 1.0, 0.0, rng), ConfigError);
    p.target_scintillation = -1.0;
    EXPECT_THROW(synthesize_turbulence(p, 1.0, 1e-3, rng), ConfigError);
}
