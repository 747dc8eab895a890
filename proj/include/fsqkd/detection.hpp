#pragma once

// Receiver chain: 50:50 basis split, imbalanced Mach-Zehnder interferometer
// for the X basis, single-photon detector click statistics and visibility.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "fsqkd/events.hpp"
#include "fsqkd/protocol.hpp"
#include "fsqkd/random.hpp"

namespace fsqkd {

struct DetectorConfig {
    double efficiency = 0.85;
    double dark_rate_hz = 100.0;
    double dead_time_s = 20e-9;
    double jitter_std_s = 50e-12;

    void validate() const;
};

struct ImziConfig {
    double delay_s = 800e-12;
    double intrinsic_visibility = 1.0;
    double phase_rad = 0.0;
    double insertion_loss_db = 0.0;
    double drift_rad_per_s = 0.0;

    double phase_at(double t_s) const noexcept { return phase_rad + drift_rad_per_s * t_s; }
    void validate() const;
};

struct ReceiverConfig {
    double insertion_loss_db = 0.0;  // fibre/demultiplexer losses ahead of the basis splitter
    double z_split = 0.5;            // fraction routed to the Z detector
    std::array<DetectorConfig, kDetectorCount> detectors{};
    ImziConfig imzi;
    double gate_halfwidth_s = 200e-12;

    const DetectorConfig& detector(Detector d) const noexcept {
        return detectors[static_cast<std::size_t>(d)];
    }
    /// Checks ranges and that the interferometer delay matches the source bin separation.
    void validate(const SourceConfig& source) const;
};

/// Click probabilities indexed [port][bin] with port 0 = XOut1, 1 = XOut2.
struct ImziResponse {
    std::array<std::array<double, 3>, 2> p{};

    double at(Detector port, Bin bin) const;
    double total() const noexcept;
};

/// Delay-interferometer response for one photon with the given time-bin amplitudes.
/// Side windows carry |a_E|^2/4 and |a_L|^2/4 per port; the central window mixes the
/// coherent term |a_L +- e^{i phi} a_E|^2/4 with its incoherent counterpart in
/// proportion to the intrinsic visibility. Insertion loss scales every entry.
ImziResponse imzi_response(const BinAmplitudes& amps, const ImziConfig& cfg, double phase_rad);
inline ImziResponse imzi_response(const BinAmplitudes& amps, const ImziConfig& cfg) {
    return imzi_response(amps, cfg, cfg.phase_rad);
}

/// Nominal arrival offset of a window relative to the slot start.
double bin_center(Detector d, Bin b, double tau_s) noexcept;

/// Window label for a click at `offset_s` into its slot, or empty when it misses every gate.
std::optional<Bin> gate(Detector d, double offset_s, double tau_s, double halfwidth_s) noexcept;

/// Arrival offset of a dark count within its slot, uniform over one slot period
/// starting at the opening of the early gate.
inline double dark_offset(double u, double period_s, double halfwidth_s) noexcept {
    return -halfwidth_s + u * period_s;
}

struct DetectionDiagnostics {
    std::uint64_t dark_counts = 0;
    std::uint64_t gated_out = 0;
    std::uint64_t dead_time_suppressed = 0;
    std::uint64_t raw_clicks = 0;

    DetectionDiagnostics& operator+=(const DetectionDiagnostics& o) noexcept;
    bool operator==(const DetectionDiagnostics&) const = default;
};

/// Non-paralyzable dead time; one instance tracks all three detectors across calls.
class DeadTimeFilter {
public:
    explicit DeadTimeFilter(const ReceiverConfig& rx);

    /// Time-ordered input; returns whether the click is registered.
    bool accept(const DetectionEvent& e) noexcept;

private:
    std::array<double, kDetectorCount> dead_time_{};
    std::array<double, kDetectorCount> last_{};
    std::array<bool, kDetectorCount> armed_{};
};

struct DetectResult {
    std::vector<DetectionEvent> events;  // time ordered
    DetectionDiagnostics diagnostics;
};

/// Photon-by-photon reference model. Each slot emits Poisson(mu) photons; every photon
/// is thinned in fixed order by channel transmittance, receiver insertion loss, basis
/// splitter, time-bin routing (Z) or interferometer (X), then detector efficiency.
/// Dark counts, jitter, gating and dead time are applied afterwards.
DetectResult detect(std::span<const PulseSlot> slots, std::span<const double> transmittance,
                    const SourceConfig& source, const ReceiverConfig& rx, Rng& rng);

/// (max - min) / (max + min).
double visibility(std::uint64_t max_counts, std::uint64_t min_counts);

double qber_x_from_visibility(double v);

}  // namespace fsqkd
