#include "fsqkd/channel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "fsqkd/errors.hpp"

namespace fsqkd {

namespace {

constexpr double kLogIntensityCoeff = 0.496;
constexpr double kFriedCoeff = 1.46;

double wavenumber(double wavelength_m) { return 2.0 * std::numbers::pi / wavelength_m; }

void require_positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError(std::string(what) + " must be a positive finite number");
    }
}

// One step of an exponentially correlated unit-variance Gaussian process.
struct UnitOu {
    double rho;
    double kick;

    UnitOu(double dt, double corr_time) {
        rho = std::isinf(corr_time) ? 1.0 : std::exp(-dt / corr_time);
        kick = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    }
    double step(double x, Rng& rng) const {
        // Skip the draw entirely in the frozen limit so the series stays exactly constant.
        return kick == 0.0 ? x : rho * x + kick * rng.normal();
    }
};

}  // namespace

void BeamParams::validate() const {
    require_positive(waist_radius_m, "beam waist radius");
    require_positive(wavelength_m, "beam wavelength");
    require_positive(link_length_m, "link length");
    require_positive(aperture_diameter_m, "aperture diameter");
}

void TurbulenceParams::validate() const {
    if (!(cn2 >= 0.0)) throw ConfigError("turbulence: cn2 must be >= 0");
    if (!(target_scintillation >= 0.0) || !std::isfinite(target_scintillation)) {
        throw ConfigError("turbulence: target scintillation must be a finite value >= 0");
    }
    if (!(wander_std_m >= 0.0)) throw ConfigError("turbulence: wander std must be >= 0");
    if (!(wander_aspect >= 0.0)) throw ConfigError("turbulence: wander aspect must be >= 0");
    if (!(wander_corr_time_s > 0.0)) {
        throw ConfigError("turbulence: wander correlation time must be positive");
    }
    if (!(scintillation_corr_time_s > 0.0)) {
        throw ConfigError("turbulence: scintillation correlation time must be positive");
    }
    if (!(mean_transmittance > 0.0 && mean_transmittance <= 1.0)) {
        throw ConfigError("turbulence: mean transmittance must lie in (0, 1]");
    }
}

void LinkBudget::add(std::string label, double loss_db) {
    if (!(loss_db >= 0.0) || !std::isfinite(loss_db)) {
        throw ConfigError("link budget: component '" + label + "' must be a finite loss >= 0 dB");
    }
    components_.emplace_back(std::move(label), loss_db);
}

double LinkBudget::total_db() const noexcept {
    double total = 0.0;
    for (const auto& [_, db] : components_) total += db;
    return total;
}

double LinkBudget::transmittance() const noexcept { return db_to_fraction(total_db()); }

std::optional<double> LinkBudget::component(std::string_view label) const {
    for (const auto& [name, db] : components_) {
        if (name == label) return db;
    }
    return std::nullopt;
}

double db_to_fraction(double loss_db) noexcept { return std::pow(10.0, -loss_db / 10.0); }
double fraction_to_db(double fraction) noexcept { return -10.0 * std::log10(fraction); }

double rayleigh_range(const BeamParams& beam) noexcept {
    return std::numbers::pi * beam.waist_radius_m * beam.waist_radius_m / beam.wavelength_m;
}

double beam_radius(double z_m, const BeamParams& beam) {
    if (!(z_m >= 0.0)) throw ContractViolation("beam_radius: z must be >= 0");
    const double ratio = z_m / rayleigh_range(beam);
    return beam.waist_radius_m * std::sqrt(1.0 + ratio * ratio);
}

double aperture_transmission(double beam_radius_m, double aperture_diameter_m) {
    if (!(beam_radius_m > 0.0) || !(aperture_diameter_m > 0.0)) {
        throw ContractViolation("aperture_transmission: radius and diameter must be positive");
    }
    const double x = aperture_diameter_m / beam_radius_m;
    return -std::expm1(-0.5 * x * x);
}

IntensityMoments intensity_moments(std::span<const double> samples) {
    if (samples.size() < 2) throw StatisticError("intensity statistics need at least 2 samples");
    double sum = 0.0;
    for (double s : samples) sum += s;
    const double n = static_cast<double>(samples.size());
    const double mean = sum / n;
    if (!(mean > 0.0)) throw StatisticError("intensity statistics need a positive mean");
    double ss = 0.0;
    for (double s : samples) ss += (s - mean) * (s - mean);
    return {mean, ss / n};
}

double scintillation_index(std::span<const double> samples) {
    const auto m = intensity_moments(samples);
    return m.variance / (m.mean * m.mean);
}

double log_intensity_variance(std::span<const double> samples) {
    return std::log1p(scintillation_index(samples));
}

double cn2_from_log_variance(double sigma_ln2, double wavelength_m, double link_length_m) {
    require_positive(wavelength_m, "wavelength");
    require_positive(link_length_m, "link length");
    return sigma_ln2 / (kLogIntensityCoeff * std::pow(wavenumber(wavelength_m), 7.0 / 6.0) *
                        std::pow(link_length_m, 11.0 / 6.0));
}

double cn2_from_samples(std::span<const double> samples, double wavelength_m,
                        double link_length_m) {
    return cn2_from_log_variance(log_intensity_variance(samples), wavelength_m, link_length_m);
}

double log_variance_from_cn2(double cn2, double wavelength_m, double link_length_m) {
    return kLogIntensityCoeff * cn2 * std::pow(wavenumber(wavelength_m), 7.0 / 6.0) *
           std::pow(link_length_m, 11.0 / 6.0);
}

double fried_parameter(double cn2, double wavelength_m, double link_length_m) {
    require_positive(wavelength_m, "wavelength");
    require_positive(link_length_m, "link length");
    if (cn2 == 0.0) throw InfiniteResolution();
    if (!(cn2 > 0.0)) throw ContractViolation("fried_parameter: cn2 must be >= 0");
    const double k = wavenumber(wavelength_m);
    return std::pow(kFriedCoeff * k * k * cn2 * link_length_m, -3.0 / 5.0);
}

Regime classify_regime(double sigma_i2) {
    if (!(sigma_i2 >= 0.0)) throw ContractViolation("classify_regime: sigma_I^2 must be >= 0");
    return sigma_i2 < 1.0 ? Regime::kWeak : Regime::kModerateToStrong;
}

std::string_view to_string(Regime r) noexcept {
    return r == Regime::kWeak ? "weak" : "moderate-to-strong";
}

TurbulenceEstimate estimate_turbulence(double sigma_i2, double wavelength_m,
                                       double link_length_m) {
    TurbulenceEstimate est;
    est.sigma_i2 = std::max(0.0, sigma_i2);
    est.sigma_ln2 = std::log1p(est.sigma_i2);
    est.cn2 = cn2_from_log_variance(est.sigma_ln2, wavelength_m, link_length_m);
    est.regime = classify_regime(est.sigma_i2);
    if (est.cn2 > 0.0) est.fried_m = fried_parameter(est.cn2, wavelength_m, link_length_m);
    return est;
}

TurbulenceEstimate estimate_turbulence(std::span<const double> samples, double wavelength_m,
                                       double link_length_m) {
    return estimate_turbulence(scintillation_index(samples), wavelength_m, link_length_m);
}

TransmittanceSeries synthesize_turbulence(const TurbulenceParams& params, double duration_s,
                                          double dt_s, Rng& rng) {
    params.validate();
    if (!(dt_s > 0.0) || !(duration_s > dt_s)) {
        throw ConfigError("turbulence synthesis: need duration > dt > 0");
    }
    const auto n = static_cast<std::size_t>(std::llround(duration_s / dt_s));
    const double sigma_ln2 = std::log1p(params.target_scintillation);
    const double sigma_ln = std::sqrt(sigma_ln2);
    const double sx = params.wander_std_m;
    const double sy = params.wander_std_m * params.wander_aspect;

    TransmittanceSeries out;
    out.dt_s = dt_s;
    out.intensity.resize(n);
    out.transmittance.resize(n);
    out.offset_x_m.resize(n);
    out.offset_y_m.resize(n);

    const UnitOu log_amp(dt_s, params.scintillation_corr_time_s);
    const UnitOu wander(dt_s, params.wander_corr_time_s);
    // Start from the stationary distribution.
    double g = rng.normal();
    double wx = rng.normal();
    double wy = rng.normal();
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) {
            g = log_amp.step(g, rng);
            wx = wander.step(wx, rng);
            wy = wander.step(wy, rng);
        }
        const double intensity = std::exp(sigma_ln * g - 0.5 * sigma_ln2);
        out.intensity[i] = intensity;
        out.transmittance[i] = std::clamp(params.mean_transmittance * intensity, 0.0, 1.0);
        out.offset_x_m[i] = sx * wx;
        out.offset_y_m[i] = sy * wy;
    }
    return out;
}

}  // namespace fsqkd
