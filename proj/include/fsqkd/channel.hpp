#pragma once

// Free-space channel physics: Gaussian beam propagation, aperture truncation,
// turbulence statistics and stochastic transmittance/beam-wander synthesis.

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fsqkd/random.hpp"

namespace fsqkd {

struct BeamParams {
    double waist_radius_m = 7e-3;
    double wavelength_m = 1558.98e-9;
    double link_length_m = 500.0;
    double aperture_diameter_m = 35e-3;

    void validate() const;
};

struct TurbulenceParams {
    double cn2 = 0.0;                    // m^(-2/3), informational
    double target_scintillation = 0.0;   // sigma_I^2 of the synthesized intensity
    double scintillation_corr_time_s = 10e-3;
    double wander_std_m = 0.0;           // stationary std of the horizontal axis
    double wander_aspect = 1.0;          // vertical std / horizontal std
    double wander_corr_time_s = 3e-3;    // +inf freezes the offsets
    double mean_transmittance = 1.0;     // static factor applied before clamping to [0, 1]

    void validate() const;
};

struct TransmittanceSeries {
    double dt_s = 1e-3;
    std::vector<double> intensity;      // relative intensity factor, unit mean
    std::vector<double> transmittance;  // mean_transmittance * intensity, clamped to [0, 1]
    std::vector<double> offset_x_m;
    std::vector<double> offset_y_m;

    std::size_t size() const noexcept { return transmittance.size(); }
    bool empty() const noexcept { return transmittance.empty(); }
};

class LinkBudget {
public:
    /// Adds a named loss; negative or non-finite values are a ConfigError.
    void add(std::string label, double loss_db);

    double total_db() const noexcept;
    double transmittance() const noexcept;
    std::optional<double> component(std::string_view label) const;
    const std::vector<std::pair<std::string, double>>& components() const noexcept {
        return components_;
    }

private:
    std::vector<std::pair<std::string, double>> components_;
};

double db_to_fraction(double loss_db) noexcept;
double fraction_to_db(double fraction) noexcept;

double rayleigh_range(const BeamParams& beam) noexcept;

/// Vacuum Gaussian beam radius w(z) = w0 sqrt(1 + (z / z_R)^2).
double beam_radius(double z_m, const BeamParams& beam);

/// Power fraction of a centred Gaussian beam passing a circular aperture: 1 - exp(-D^2 / (2 w^2)).
double aperture_transmission(double beam_radius_m, double aperture_diameter_m);

struct IntensityMoments {
    double mean = 0.0;
    double variance = 0.0;  // population variance
};

/// Two-pass mean/variance; StatisticError for fewer than two samples or a non-positive mean.
IntensityMoments intensity_moments(std::span<const double> samples);

double scintillation_index(std::span<const double> samples);
double log_intensity_variance(std::span<const double> samples);

/// Weak-turbulence horizontal-path inversion: C_n^2 = sigma_ln^2 / (0.496 k^(7/6) L^(11/6)).
double cn2_from_log_variance(double sigma_ln2, double wavelength_m, double link_length_m);
double cn2_from_samples(std::span<const double> samples, double wavelength_m,
                        double link_length_m);
/// Forward model of the same relation, sigma_ln^2 for a given C_n^2.
double log_variance_from_cn2(double cn2, double wavelength_m, double link_length_m);

/// Horizontal-path Fried parameter (1.46 k^2 C_n^2 L)^(-3/5); InfiniteResolution when cn2 == 0.
double fried_parameter(double cn2, double wavelength_m, double link_length_m);

enum class Regime { kWeak, kModerateToStrong };
Regime classify_regime(double sigma_i2);
std::string_view to_string(Regime r) noexcept;

struct TurbulenceEstimate {
    double sigma_i2 = 0.0;
    double sigma_ln2 = 0.0;
    double cn2 = 0.0;
    std::optional<double> fried_m;  // empty: unbounded (C_n^2 = 0)
    Regime regime = Regime::kWeak;
};

TurbulenceEstimate estimate_turbulence(double sigma_i2, double wavelength_m,
                                       double link_length_m);
TurbulenceEstimate estimate_turbulence(std::span<const double> samples, double wavelength_m,
                                       double link_length_m);

/// Stationary lognormal intensity (exponentially correlated log-amplitude) and
/// Ornstein-Uhlenbeck beam wander sampled on a dt grid.
TransmittanceSeries synthesize_turbulence(const TurbulenceParams& params, double duration_s,
                                          double dt_s, Rng& rng);

}  // namespace fsqkd
