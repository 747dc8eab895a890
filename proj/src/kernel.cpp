#include "fsqkd/kernel.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "fsqkd/channel.hpp"
#include "fsqkd/errors.hpp"
#include "fsqkd/random.hpp"

namespace fsqkd {

namespace {

constexpr int kCells = 8;
constexpr std::size_t kChunkBins = 32;

struct Cell {
    Detector detector;
    Bin bin;
};

constexpr std::array<Cell, kCells> kCellMap{{
    {Detector::kZ, Bin::kEarly},
    {Detector::kZ, Bin::kLate},
    {Detector::kXOut1, Bin::kEarly},
    {Detector::kXOut1, Bin::kCentral},
    {Detector::kXOut1, Bin::kLate},
    {Detector::kXOut2, Bin::kEarly},
    {Detector::kXOut2, Bin::kCentral},
    {Detector::kXOut2, Bin::kLate},
}};

// Registration probability of a single emitted photon per cell, for one state.
struct StateRouting {
    std::array<double, kCells> cell{};
    double total = 0.0;
};

StateRouting route(TimeBinState state, double transmittance, double phase,
                   const SourceConfig& src, const ReceiverConfig& rx) {
    const BinAmplitudes amps = encode_amplitudes(state);
    const double pass = transmittance * db_to_fraction(rx.insertion_loss_db);
    const double pe = std::norm(amps.early);
    const double c = src.bin_crosstalk;
    const double z = pass * rx.z_split * rx.detector(Detector::kZ).efficiency;
    const double x = pass * (1.0 - rx.z_split);
    const ImziResponse imzi = imzi_response(amps, rx.imzi, phase);

    StateRouting r;
    r.cell[0] = z * (pe * (1.0 - c) + (1.0 - pe) * c);
    r.cell[1] = z * ((1.0 - pe) * (1.0 - c) + pe * c);
    for (int port = 0; port < 2; ++port) {
        const double eff = rx.detectors[static_cast<std::size_t>(port) + 1].efficiency;
        for (int b = 0; b < 3; ++b) r.cell[2 + 3 * port + b] = x * eff * imzi.p[port][b];
    }
    for (double v : r.cell) r.total += v;
    return r;
}

struct Hit {
    std::uint64_t slot;
    std::uint8_t cells;  // bitmask over kCellMap
    int emitted;
};

}  // namespace

std::uint64_t bin_first_slot(std::uint64_t bin, double dt_s, double rate_hz) noexcept {
    return static_cast<std::uint64_t>(std::llround(static_cast<double>(bin) * dt_s * rate_hz));
}

std::vector<DetectionEvent> bin_clicks(const PulseSource& source, const ReceiverConfig& rx,
                                       const BlockChannel& channel, std::uint64_t bin,
                                       std::uint64_t seed, DetectionDiagnostics& diag) {
    const SourceConfig& src = source.config();
    const double period = src.slot_period_s();
    const double tau = src.bin_delay_s;
    const std::uint64_t first = bin_first_slot(bin, channel.dt_s, src.rate_hz);
    const std::uint64_t last = bin_first_slot(bin + 1, channel.dt_s, src.rate_hz);
    const double t_bin = static_cast<double>(first) * period;
    const double transmittance = channel.bin_transmittance[bin];
    const double phase = rx.imzi.phase_at(t_bin);

    Rng rng(derive_seed(seed, Stream::kDetection, bin));

    std::array<StateRouting, 3> routing;
    for (int s = 0; s < 3; ++s) {
        routing[s] = route(static_cast<TimeBinState>(s), transmittance, phase, src, rx);
    }
    // Registered-photon mean and click probability per (intensity, state).
    std::array<std::array<double, 3>, kIntensityCount> mean{};
    std::array<std::array<double, 3>, kIntensityCount> p_click{};
    double p_max = 0.0;
    for (int k = 0; k < kIntensityCount; ++k) {
        for (int s = 0; s < 3; ++s) {
            mean[k][s] = src.mean_photons(static_cast<Intensity>(k)) * routing[s].total;
            p_click[k][s] = -std::expm1(-mean[k][s]);
            p_max = std::max(p_max, p_click[k][s]);
        }
    }

    std::vector<Hit> hits;
    if (p_max > 0.0) {
        std::uint64_t slot = first;
        for (;;) {
            const std::uint64_t skip = rng.geometric_failures(p_max);
            if (skip >= last - slot) break;
            slot += skip;
            const PulseSlot ps = source.slot(slot);
            const auto k = static_cast<std::size_t>(ps.intensity);
            const auto s = static_cast<std::size_t>(ps.state);
            if (rng.uniform() * p_max < p_click[k][s]) {
                const std::uint64_t registered = rng.poisson_at_least_one(mean[k][s]);
                const std::uint64_t missed = rng.poisson(ps.mean_photons - mean[k][s]);
                std::uint8_t mask = 0;
                const StateRouting& r = routing[s];
                for (std::uint64_t p = 0; p < registered; ++p) {
                    double u = rng.uniform() * r.total;
                    int c = 0;
                    while (c < kCells - 1 && u >= r.cell[c]) {
                        u -= r.cell[c];
                        ++c;
                    }
                    mask |= static_cast<std::uint8_t>(1U << c);
                }
                hits.push_back({slot, mask, static_cast<int>(registered + missed)});
            }
            if (++slot >= last) break;
        }
    }

    std::vector<DetectionEvent> events;
    events.reserve(hits.size() + hits.size() / 4);
    for (const Hit& h : hits) {
        const double t_slot = static_cast<double>(h.slot) * period;
        for (int c = 0; c < kCells; ++c) {
            if (!(h.cells & (1U << c))) continue;
            const Cell cell = kCellMap[c];
            const double jitter = rx.detector(cell.detector).jitter_std_s;
            const double offset =
                bin_center(cell.detector, cell.bin, tau) + (jitter > 0.0 ? jitter * rng.normal() : 0.0);
            ++diag.raw_clicks;
            const auto label = gate(cell.detector, offset, tau, rx.gate_halfwidth_s);
            if (!label) {
                ++diag.gated_out;
                continue;
            }
            events.push_back({h.slot, cell.detector, *label, t_slot + offset, h.emitted});
        }
    }

    // Dark counts: Poisson over the bin, uniform in time, gated like photon clicks.
    struct Dark {
        std::uint64_t slot;
        Detector detector;
        Bin bin;
        double offset;
    };
    std::vector<Dark> darks;
    const double bin_time = static_cast<double>(last - first) * period;
    for (int d = 0; d < kDetectorCount; ++d) {
        const auto det = static_cast<Detector>(d);
        const std::uint64_t count = rng.poisson(rx.detectors[d].dark_rate_hz * bin_time);
        diag.dark_counts += count;
        for (std::uint64_t i = 0; i < count; ++i) {
            const std::uint64_t slot = first + rng.below(last - first);
            const double offset = dark_offset(rng.uniform(), period, rx.gate_halfwidth_s);
            ++diag.raw_clicks;
            const auto label = gate(det, offset, tau, rx.gate_halfwidth_s);
            if (!label) {
                ++diag.gated_out;
                continue;
            }
            darks.push_back({slot, det, *label, offset});
        }
    }
    std::stable_sort(darks.begin(), darks.end(), [](const Dark& a, const Dark& b) { return a.slot < b.slot; });
    std::uint64_t previous_slot = 0;
    int previous_emitted = -1;
    for (const Dark& dark : darks) {
        const auto it = std::lower_bound(hits.begin(), hits.end(), dark.slot,
                                         [](const Hit& h, std::uint64_t s) { return h.slot < s; });
        int emitted;
        if (it != hits.end() && it->slot == dark.slot) {
            emitted = it->emitted;
        } else if (previous_emitted >= 0 && previous_slot == dark.slot) {
            emitted = previous_emitted;
        } else {
            // No registered photon here: emitted photons are the undetected part only.
            const PulseSlot ps = source.slot(dark.slot);
            const double undetected =
                ps.mean_photons - mean[static_cast<std::size_t>(ps.intensity)][static_cast<std::size_t>(ps.state)];
            emitted = static_cast<int>(rng.poisson(undetected));
        }
        previous_slot = dark.slot;
        previous_emitted = emitted;
        const double t_slot = static_cast<double>(dark.slot) * period;
        events.push_back({dark.slot, dark.detector, dark.bin, t_slot + dark.offset, emitted});
    }

    std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
        return a.timestamp_s < b.timestamp_s;
    });
    return events;
}

namespace {

// Dead time, multi-click resolution and sifting over one bin's raw clicks.
class BinConsumer {
public:
    BinConsumer(const PulseSource& source, const ReceiverConfig& rx, const EventSink& sink)
        : source_(source), filter_(rx), sink_(sink) {}

    void consume(const std::vector<DetectionEvent>& raw) {
        kept_.clear();
        for (const auto& e : raw) {
            if (filter_.accept(e)) {
                kept_.push_back(e);
                if (sink_) sink_(e);
            } else {
                ++diag_.dead_time_suppressed;
            }
        }
        std::stable_sort(kept_.begin(), kept_.end(),
                         [](const auto& a, const auto& b) { return a.slot < b.slot; });
        std::size_t i = 0;
        while (i < kept_.size()) {
            std::size_t j = i + 1;
            while (j < kept_.size() && kept_[j].slot == kept_[i].slot) ++j;
            sifter_.add_slot(source_.slot(kept_[i].slot),
                             std::span<const DetectionEvent>(kept_).subspan(i, j - i));
            i = j;
        }
    }

    DetectionDiagnostics& diagnostics() { return diag_; }
    const Sifter& sifter() const { return sifter_; }

private:
    const PulseSource& source_;
    DeadTimeFilter filter_;
    const EventSink& sink_;
    Sifter sifter_;
    DetectionDiagnostics diag_;
    std::vector<DetectionEvent> kept_;
};

}  // namespace

BlockResult simulate_block(const PulseSource& source, const ReceiverConfig& rx,
                           const BlockChannel& channel, std::uint64_t seed, Execution exec,
                           const EventSink& sink) {
    const SourceConfig& src = source.config();
    rx.validate(src);
    if (!(channel.dt_s > 0.0)) throw ConfigError("kernel: dt must be positive");
    for (double t : channel.bin_transmittance) {
        if (!(t >= 0.0 && t <= 1.0)) throw ContractViolation("kernel: transmittance outside [0, 1]");
    }
    const std::size_t bins = channel.bin_transmittance.size();

    BinConsumer consumer(source, rx, sink);
    std::vector<std::vector<DetectionEvent>> raw(std::min(bins, kChunkBins));
    std::vector<DetectionDiagnostics> raw_diag(raw.size());

    for (std::size_t start = 0; start < bins; start += kChunkBins) {
        const std::size_t count = std::min(kChunkBins, bins - start);
        const auto n = static_cast<std::int64_t>(count);
        if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic, 1)
            for (std::int64_t i = 0; i < n; ++i) {
                const auto idx = static_cast<std::size_t>(i);
                raw_diag[idx] = {};
                raw[idx] = bin_clicks(source, rx, channel, start + idx, seed, raw_diag[idx]);
            }
        } else {
            for (std::int64_t i = 0; i < n; ++i) {
                const auto idx = static_cast<std::size_t>(i);
                raw_diag[idx] = {};
                raw[idx] = bin_clicks(source, rx, channel, start + idx, seed, raw_diag[idx]);
            }
        }
        for (std::size_t i = 0; i < count; ++i) {
            consumer.diagnostics() += raw_diag[i];
            consumer.consume(raw[i]);
        }
    }

    BlockResult result;
    result.tally = consumer.sifter().tally();
    result.sift = consumer.sifter().diagnostics();
    result.detection = consumer.diagnostics();
    result.slots = bin_first_slot(bins, channel.dt_s, src.rate_hz);
    result.duration_s = static_cast<double>(result.slots) * src.slot_period_s();
    result.tally.elapsed_s = result.duration_s;
    return result;
}

}  // namespace fsqkd
