#include "fsqkd/detection.hpp"

#include <algorithm>
#include <cmath>

#include "fsqkd/channel.hpp"
#include "fsqkd/errors.hpp"

namespace fsqkd {

namespace {

bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

void require(bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
}

constexpr std::array<Bin, 2> kZBins{Bin::kEarly, Bin::kLate};
constexpr std::array<Bin, 3> kXBins{Bin::kEarly, Bin::kCentral, Bin::kLate};

std::span<const Bin> windows(Detector d) {
    if (d == Detector::kZ) return kZBins;
    return kXBins;
}

}  // namespace

void DetectorConfig::validate() const {
    require(in_unit(efficiency), "detector: efficiency must lie in [0, 1]");
    require(dark_rate_hz >= 0.0, "detector: dark rate must be >= 0");
    require(dead_time_s >= 0.0, "detector: dead time must be >= 0");
    require(jitter_std_s >= 0.0, "detector: jitter must be >= 0");
}

void ImziConfig::validate() const {
    require(delay_s > 0.0, "interferometer: delay must be positive");
    require(in_unit(intrinsic_visibility), "interferometer: visibility must lie in [0, 1]");
    require(insertion_loss_db >= 0.0, "interferometer: insertion loss must be >= 0 dB");
    require(std::isfinite(phase_rad) && std::isfinite(drift_rad_per_s),
            "interferometer: phase and drift must be finite");
}

void ReceiverConfig::validate(const SourceConfig& source) const {
    require(insertion_loss_db >= 0.0, "receiver: insertion loss must be >= 0 dB");
    require(in_unit(z_split), "receiver: Z split must lie in [0, 1]");
    for (const auto& d : detectors) d.validate();
    imzi.validate();
    require(std::fabs(imzi.delay_s - source.bin_delay_s) <= 1e-9 * source.bin_delay_s,
            "receiver: interferometer delay must equal the source bin separation");
    require(gate_halfwidth_s > 0.0 && gate_halfwidth_s <= 0.5 * source.bin_delay_s,
            "receiver: gate half-width must lie in (0, tau/2]");
}

double ImziResponse::at(Detector port, Bin bin) const {
    if (port == Detector::kZ) throw ContractViolation("imzi: Z is not an interferometer port");
    return p[static_cast<std::size_t>(port) - 1][static_cast<std::size_t>(bin)];
}

double ImziResponse::total() const noexcept {
    double s = 0.0;
    for (const auto& port : p) {
        for (double v : port) s += v;
    }
    return s;
}

ImziResponse imzi_response(const BinAmplitudes& amps, const ImziConfig& cfg, double phase_rad) {
    if (std::fabs(amps.norm() - 1.0) > 1e-9) {
        throw ContractViolation("imzi: input amplitudes are not normalized");
    }
    const double pe = std::norm(amps.early);
    const double pl = std::norm(amps.late);
    const double loss = db_to_fraction(cfg.insertion_loss_db);
    const double v = cfg.intrinsic_visibility;
    // Re(conj(a_L) e^{i phi} a_E) is the interference term of the central window.
    const double cross = std::real(std::conj(amps.late) * std::polar(1.0, phase_rad) * amps.early);
    const double incoherent = 0.25 * (pe + pl);

    ImziResponse r;
    for (int port = 0; port < 2; ++port) {
        const double sign = port == 0 ? 1.0 : -1.0;
        r.p[port][0] = loss * 0.25 * pe;
        r.p[port][1] = loss * (incoherent + sign * 0.5 * v * cross);
        r.p[port][2] = loss * 0.25 * pl;
    }
    return r;
}

double bin_center(Detector d, Bin b, double tau_s) noexcept {
    if (d == Detector::kZ) return b == Bin::kEarly ? 0.0 : tau_s;
    return static_cast<double>(static_cast<int>(b)) * tau_s;
}

std::optional<Bin> gate(Detector d, double offset_s, double tau_s, double halfwidth_s) noexcept {
    for (Bin b : windows(d)) {
        if (std::fabs(offset_s - bin_center(d, b, tau_s)) <= halfwidth_s) return b;
    }
    return std::nullopt;
}

DetectionDiagnostics& DetectionDiagnostics::operator+=(const DetectionDiagnostics& o) noexcept {
    dark_counts += o.dark_counts;
    gated_out += o.gated_out;
    dead_time_suppressed += o.dead_time_suppressed;
    raw_clicks += o.raw_clicks;
    return *this;
}

DeadTimeFilter::DeadTimeFilter(const ReceiverConfig& rx) {
    for (int d = 0; d < kDetectorCount; ++d) dead_time_[d] = rx.detectors[d].dead_time_s;
}

bool DeadTimeFilter::accept(const DetectionEvent& e) noexcept {
    const auto d = static_cast<std::size_t>(e.detector);
    if (armed_[d] && e.timestamp_s - last_[d] < dead_time_[d]) return false;
    armed_[d] = true;
    last_[d] = e.timestamp_s;
    return true;
}

DetectResult detect(std::span<const PulseSlot> slots, std::span<const double> transmittance,
                    const SourceConfig& source, const ReceiverConfig& rx, Rng& rng) {
    source.validate();
    rx.validate(source);
    if (transmittance.size() != slots.size()) {
        throw ContractViolation("detect: one transmittance value per slot is required");
    }
    const double period = source.slot_period_s();
    const double tau = source.bin_delay_s;
    const double rx_pass = db_to_fraction(rx.insertion_loss_db);

    DetectResult out;
    std::vector<DetectionEvent> raw;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        const PulseSlot& slot = slots[i];
        const double t_ch = transmittance[i];
        if (!in_unit(t_ch)) throw ContractViolation("detect: transmittance outside [0, 1]");
        const double t_slot = static_cast<double>(slot.index) * period;
        const BinAmplitudes amps = encode_amplitudes(slot);
        const ImziResponse imzi = imzi_response(amps, rx.imzi, rx.imzi.phase_at(t_slot));
        const double pe = std::norm(amps.early);

        // hit[detector][bin]
        std::array<std::array<bool, 3>, kDetectorCount> hit{};
        const std::uint64_t photons = rng.poisson(slot.mean_photons);
        for (std::uint64_t p = 0; p < photons; ++p) {
            if (!rng.bernoulli(t_ch)) continue;
            if (!rng.bernoulli(rx_pass)) continue;
            Detector det;
            Bin bin;
            if (rng.bernoulli(rx.z_split)) {
                det = Detector::kZ;
                bool early = rng.bernoulli(pe);
                if (rng.bernoulli(source.bin_crosstalk)) early = !early;
                bin = early ? Bin::kEarly : Bin::kLate;
            } else {
                double u = rng.uniform();
                bool routed = false;
                for (int port = 0; port < 2 && !routed; ++port) {
                    for (int b = 0; b < 3 && !routed; ++b) {
                        if (u < imzi.p[port][b]) {
                            det = static_cast<Detector>(port + 1);
                            bin = static_cast<Bin>(b);
                            routed = true;
                        }
                        u -= imzi.p[port][b];
                    }
                }
                if (!routed) continue;  // interferometer insertion loss
            }
            if (!rng.bernoulli(rx.detector(det).efficiency)) continue;
            hit[static_cast<std::size_t>(det)][static_cast<std::size_t>(bin)] = true;
        }
        const int emitted = static_cast<int>(std::min<std::uint64_t>(photons, 1 << 20));
        for (int d = 0; d < kDetectorCount; ++d) {
            const auto det = static_cast<Detector>(d);
            const std::uint64_t darks = rng.poisson(rx.detectors[d].dark_rate_hz * period);
            out.diagnostics.dark_counts += darks;
            for (std::uint64_t k = 0; k < darks; ++k) {
                const double offset = dark_offset(rng.uniform(), period, rx.gate_halfwidth_s);
                ++out.diagnostics.raw_clicks;
                const auto label = gate(det, offset, tau, rx.gate_halfwidth_s);
                if (!label) {
                    ++out.diagnostics.gated_out;
                    continue;
                }
                raw.push_back({slot.index, det, *label, t_slot + offset, emitted});
            }
        }
        for (int d = 0; d < kDetectorCount; ++d) {
            const auto det = static_cast<Detector>(d);
            for (Bin b : windows(det)) {
                if (!hit[d][static_cast<std::size_t>(b)]) continue;
                const double offset =
                    bin_center(det, b, tau) + rx.detectors[d].jitter_std_s * rng.normal();
                ++out.diagnostics.raw_clicks;
                const auto label = gate(det, offset, tau, rx.gate_halfwidth_s);
                if (!label) {
                    ++out.diagnostics.gated_out;
                    continue;
                }
                raw.push_back({slot.index, det, *label, t_slot + offset, emitted});
            }
        }
    }
    std::stable_sort(raw.begin(), raw.end(), [](const auto& a, const auto& b) {
        return a.timestamp_s < b.timestamp_s;
    });
    DeadTimeFilter filter(rx);
    out.events.reserve(raw.size());
    for (const auto& e : raw) {
        if (filter.accept(e)) {
            out.events.push_back(e);
        } else {
            ++out.diagnostics.dead_time_suppressed;
        }
    }
    return out;
}

double visibility(std::uint64_t max_counts, std::uint64_t min_counts) {
    if (max_counts < min_counts) throw DataError("visibility: max counts below min counts");
    const std::uint64_t denom = max_counts + min_counts;
    if (denom == 0) throw StatisticError("visibility: no counts");
    return static_cast<double>(max_counts - min_counts) / static_cast<double>(denom);
}

double qber_x_from_visibility(double v) {
    if (!in_unit(v)) throw ContractViolation("qber_x_from_visibility: V must lie in [0, 1]");
    return (1.0 - v) / 2.0;
}

}  // namespace fsqkd
