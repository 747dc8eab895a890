#pragma once

// Time-bin state preparation for the three-state one-decoy BB84 protocol,
// plus sifting and per-intensity error tallies.

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "fsqkd/events.hpp"

namespace fsqkd {

enum class TimeBinState : std::uint8_t { kEarly = 0, kLate = 1, kPlus = 2 };
enum class Basis : std::uint8_t { kZ = 0, kX = 1 };
enum class Intensity : std::uint8_t { kSignal = 0, kDecoy = 1 };

inline constexpr int kIntensityCount = 2;

struct SourceConfig {
    double rate_hz = 595e6;
    double bin_delay_s = 800e-12;  // early/late separation tau
    double mu_signal = 0.5;
    double mu_decoy = 0.2;
    double p_z = 0.5;
    double p_signal = 0.7;
    // Probability that a Z-basis photon is registered in the opposite time bin
    // (finite extinction of the carving modulator).
    double bin_crosstalk = 0.0;

    double slot_period_s() const noexcept { return 1.0 / rate_hz; }
    double mean_photons(Intensity k) const noexcept {
        return k == Intensity::kSignal ? mu_signal : mu_decoy;
    }
    double probability(Intensity k) const noexcept {
        return k == Intensity::kSignal ? p_signal : 1.0 - p_signal;
    }

    /// Throws ConfigError when probabilities or intensities are out of range.
    void validate() const;
};

struct PulseSlot {
    std::uint64_t index = 0;
    TimeBinState state = TimeBinState::kEarly;
    Basis basis = Basis::kZ;
    Intensity intensity = Intensity::kSignal;
    double mean_photons = 0.0;
};

/// Deterministic slot oracle: the attributes of slot i are a pure function of (seed, i),
/// so any slot can be regenerated without materializing the whole train.
class PulseSource {
public:
    PulseSource(const SourceConfig& cfg, std::uint64_t seed);

    PulseSlot slot(std::uint64_t index) const noexcept;
    const SourceConfig& config() const noexcept { return cfg_; }
    std::uint64_t seed() const noexcept { return key_; }

private:
    SourceConfig cfg_;
    std::uint64_t key_;
};

std::vector<PulseSlot> generate_pulse_train(std::uint64_t n, const SourceConfig& cfg,
                                            std::uint64_t seed);

struct BinAmplitudes {
    std::complex<double> early;
    std::complex<double> late;

    double norm() const noexcept { return std::norm(early) + std::norm(late); }
};

BinAmplitudes encode_amplitudes(TimeBinState state) noexcept;
inline BinAmplitudes encode_amplitudes(const PulseSlot& slot) noexcept {
    return encode_amplitudes(slot.state);
}

struct SiftedTally {
    std::array<std::uint64_t, kIntensityCount> n_z{};
    std::array<std::uint64_t, kIntensityCount> n_x{};
    std::array<std::uint64_t, kIntensityCount> m_z{};
    std::array<std::uint64_t, kIntensityCount> m_x{};
    double elapsed_s = 0.0;

    std::uint64_t total_n(Basis b) const noexcept;
    std::uint64_t total_m(Basis b) const noexcept;
    SiftedTally& operator+=(const SiftedTally& other) noexcept;
    bool operator==(const SiftedTally&) const = default;
};

struct SiftDiagnostics {
    std::uint64_t multi_click_slots = 0;
    std::uint64_t basis_mismatch = 0;    // Z click on an X state, X click on a Z state
    std::uint64_t side_bin_clicks = 0;   // non-interfering interferometer windows
    // Ground truth, available when events carry emitted photon numbers.
    std::uint64_t true_z_vacuum = 0;
    std::uint64_t true_z_single = 0;
    std::uint64_t true_x_single = 0;

    SiftDiagnostics& operator+=(const SiftDiagnostics& other) noexcept;
    bool operator==(const SiftDiagnostics&) const = default;
};

/// Incremental sifting: feed the surviving clicks of one slot at a time.
class Sifter {
public:
    void add_slot(const PulseSlot& sent, std::span<const DetectionEvent> clicks);

    const SiftedTally& tally() const noexcept { return tally_; }
    SiftedTally& tally() noexcept { return tally_; }
    const SiftDiagnostics& diagnostics() const noexcept { return diag_; }

private:
    SiftedTally tally_;
    SiftDiagnostics diag_;
};

struct SiftResult {
    SiftedTally tally;
    SiftDiagnostics diagnostics;
};

/// Sifts a detection record against the transmitted train. `sent` must hold
/// consecutive slot indices; an event outside that range is a DataError.
SiftResult sift(std::span<const PulseSlot> sent, std::span<const DetectionEvent> events);

/// Sum of errors over sum of counts for the basis; StatisticError when the basis is empty.
double qber(const SiftedTally& tally, Basis basis);

}  // namespace fsqkd
