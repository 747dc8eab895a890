#include "fsqkd/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fsqkd/errors.hpp"
#include "fsqkd/random.hpp"

namespace fsqkd {

namespace {

bool open_unit(double p) { return p > 0.0 && p < 1.0; }

}  // namespace

void SourceConfig::validate() const {
    if (!(rate_hz > 0.0)) throw ConfigError("source: rate must be positive");
    if (!(bin_delay_s > 0.0)) throw ConfigError("source: bin delay must be positive");
    if (!(2.0 * bin_delay_s < slot_period_s())) {
        throw ConfigError("source: slot period must exceed twice the bin delay");
    }
    if (!open_unit(p_z)) throw ConfigError("source: p_z must lie in (0, 1)");
    if (!open_unit(p_signal)) throw ConfigError("source: p_signal must lie in (0, 1)");
    if (!(mu_decoy > 0.0)) throw ConfigError("source: decoy intensity must be positive");
    if (!(mu_signal > mu_decoy)) {
        throw ConfigError("source: signal intensity must exceed decoy intensity");
    }
    if (!(bin_crosstalk >= 0.0 && bin_crosstalk < 0.5)) {
        throw ConfigError("source: bin crosstalk must lie in [0, 0.5)");
    }
}

PulseSource::PulseSource(const SourceConfig& cfg, std::uint64_t seed) : cfg_(cfg), key_(seed) {
    cfg_.validate();
}

PulseSlot PulseSource::slot(std::uint64_t index) const noexcept {
    const std::uint64_t w1 = hash_at(key_, 2 * index);
    const std::uint64_t w2 = hash_at(key_, 2 * index + 1);
    PulseSlot s;
    s.index = index;
    s.basis = to_unit(w1) < cfg_.p_z ? Basis::kZ : Basis::kX;
    if (s.basis == Basis::kZ) {
        s.state = (w1 & 1U) ? TimeBinState::kLate : TimeBinState::kEarly;
    } else {
        s.state = TimeBinState::kPlus;
    }
    s.intensity = to_unit(w2) < cfg_.p_signal ? Intensity::kSignal : Intensity::kDecoy;
    s.mean_photons = cfg_.mean_photons(s.intensity);
    return s;
}

std::vector<PulseSlot> generate_pulse_train(std::uint64_t n, const SourceConfig& cfg,
                                            std::uint64_t seed) {
    if (n == 0) throw ConfigError("pulse train: n must be positive");
    const PulseSource source(cfg, seed);
    std::vector<PulseSlot> train(n);
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < count; ++i) {
        train[static_cast<std::size_t>(i)] = source.slot(static_cast<std::uint64_t>(i));
    }
    return train;
}

BinAmplitudes encode_amplitudes(TimeBinState state) noexcept {
    switch (state) {
        case TimeBinState::kEarly:
            return {1.0, 0.0};
        case TimeBinState::kLate:
            return {0.0, 1.0};
        case TimeBinState::kPlus:
            break;
    }
    const double h = 1.0 / std::sqrt(2.0);
    return {h, h};
}

std::uint64_t SiftedTally::total_n(Basis b) const noexcept {
    const auto& v = b == Basis::kZ ? n_z : n_x;
    return v[0] + v[1];
}

std::uint64_t SiftedTally::total_m(Basis b) const noexcept {
    const auto& v = b == Basis::kZ ? m_z : m_x;
    return v[0] + v[1];
}

SiftedTally& SiftedTally::operator+=(const SiftedTally& o) noexcept {
    for (int k = 0; k < kIntensityCount; ++k) {
        n_z[k] += o.n_z[k];
        n_x[k] += o.n_x[k];
        m_z[k] += o.m_z[k];
        m_x[k] += o.m_x[k];
    }
    elapsed_s += o.elapsed_s;
    return *this;
}

SiftDiagnostics& SiftDiagnostics::operator+=(const SiftDiagnostics& o) noexcept {
    multi_click_slots += o.multi_click_slots;
    basis_mismatch += o.basis_mismatch;
    side_bin_clicks += o.side_bin_clicks;
    true_z_vacuum += o.true_z_vacuum;
    true_z_single += o.true_z_single;
    true_x_single += o.true_x_single;
    return *this;
}

void Sifter::add_slot(const PulseSlot& sent, std::span<const DetectionEvent> clicks) {
    if (clicks.empty()) return;
    if (clicks.size() > 1) {
        ++diag_.multi_click_slots;
        return;
    }
    const DetectionEvent& e = clicks.front();
    const auto k = static_cast<std::size_t>(sent.intensity);
    if (e.detector == Detector::kZ) {
        if (e.bin == Bin::kCentral) {
            throw DataError("sift: Z detector event labelled with the central window (slot " +
                            std::to_string(e.slot) + ")");
        }
        if (sent.basis != Basis::kZ) {
            ++diag_.basis_mismatch;
            return;
        }
        ++tally_.n_z[k];
        const Bin expected = sent.state == TimeBinState::kEarly ? Bin::kEarly : Bin::kLate;
        if (e.bin != expected) ++tally_.m_z[k];
        if (e.emitted_photons == 0) ++diag_.true_z_vacuum;
        if (e.emitted_photons == 1) ++diag_.true_z_single;
        return;
    }
    if (e.bin != Bin::kCentral) {
        ++diag_.side_bin_clicks;
        return;
    }
    if (sent.basis != Basis::kX) {
        ++diag_.basis_mismatch;
        return;
    }
    ++tally_.n_x[k];
    // Only |+> is prepared; the second output port is dark for it at zero phase.
    if (e.detector == Detector::kXOut2) ++tally_.m_x[k];
    if (e.emitted_photons == 1) ++diag_.true_x_single;
}

SiftResult sift(std::span<const PulseSlot> sent, std::span<const DetectionEvent> events) {
    Sifter sifter;
    if (events.empty()) return {};
    if (sent.empty()) throw DataError("sift: events given but no transmitted slots");

    std::vector<DetectionEvent> sorted(events.begin(), events.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return a.slot < b.slot;
    });
    const std::uint64_t first = sent.front().index;
    std::size_t i = 0;
    while (i < sorted.size()) {
        const std::uint64_t slot = sorted[i].slot;
        std::size_t j = i;
        while (j < sorted.size() && sorted[j].slot == slot) ++j;
        if (slot < first || slot - first >= sent.size()) {
            throw DataError("sift: event references slot " + std::to_string(slot) +
                            " outside the transmitted range");
        }
        const PulseSlot& s = sent[slot - first];
        if (s.index != slot) throw DataError("sift: transmitted slots are not consecutive");
        sifter.add_slot(s, std::span(sorted).subspan(i, j - i));
        i = j;
    }
    return {sifter.tally(), sifter.diagnostics()};
}

double qber(const SiftedTally& tally, Basis basis) {
    const std::uint64_t n = tally.total_n(basis);
    if (n == 0) {
        throw StatisticError(std::string("qber: no sifted counts in the ") +
                             (basis == Basis::kZ ? "Z" : "X") + " basis");
    }
    return static_cast<double>(tally.total_m(basis)) / static_cast<double>(n);
}

}  // namespace fsqkd
