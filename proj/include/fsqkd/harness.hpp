#pragma once

// End-to-end orchestration: turbulence -> tracking -> per-bin transmittance ->
// detection and sifting -> decoy bounds -> key length, plus reporting,
// parameter sweeps and offline turbulence trace analysis.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fsqkd/channel.hpp"
#include "fsqkd/detection.hpp"
#include "fsqkd/execution.hpp"
#include "fsqkd/keyrate.hpp"
#include "fsqkd/scenario.hpp"
#include "fsqkd/tracking.hpp"

namespace fsqkd {

/// Loss budget of one block. When the scenario total cannot accommodate the
/// fixed components, everything but pointing collapses into one lumped term.
struct ResolvedBudget {
    LinkBudget budget;
    bool lumped = false;
    double static_transmittance = 1.0;  // all components except pointing
    double pointing_db = 0.0;           // mean dynamic pointing loss from the tracking loop
};

ResolvedBudget resolve_budget(const Scenario& s, double mean_coupling);

/// Geometric truncation loss of the beam at the receiver aperture.
double geometric_truncation_db(const BeamParams& beam);

struct LoopSummary {
    LoopMode mode = LoopMode::kOpen;
    double mean_error_m = 0.0;
    double std_error_m = 0.0;
    double mean_coupling = 0.0;
    bool unstable = false;
};

LoopSummary summarize(const LoopReport& r) noexcept;

struct BlockReport {
    std::uint64_t index = 0;
    KeyReport key;
    SiftedTally raw_tally;
    SiftedTally block_tally;  // rescaled to the finite-key block size
    SiftDiagnostics sift;
    DetectionDiagnostics detection;
    std::uint64_t slots = 0;
    double simulated_s = 0.0;
    TurbulenceEstimate channel;
    LoopSummary tracking;
    LoopSummary open_loop;
    ResolvedBudget budget;
    double mean_transmittance = 0.0;

    // Traces for export.
    TransmittanceSeries series;
    LoopReport loop;
    std::vector<double> bin_transmittance;
};

struct RunReport {
    Scenario scenario;
    std::vector<BlockReport> blocks;
    double mean_skr_bps = 0.0;
    double mean_qber_z = 0.0;
    double mean_qber_x = 0.0;
    double visibility = 0.0;  // 1 - 2 QBER_X of the pooled X-basis tally
};

struct RunOptions {
    Execution exec = Execution::kParallel;
    std::ostream* events = nullptr;  // CSV: block,slot,detector,bin,t_ns
};

RunReport run_scenario(const Scenario& s, const RunOptions& opts = {});

nlohmann::json to_json(const RunReport& r);
/// Deterministic serialization (sorted keys, 17 significant digits).
std::string report_string(const RunReport& r);

/// report.json, tally.json, channel_trace.csv, tracking_trace.csv.
void write_outputs(const RunReport& r, const std::filesystem::path& dir);

void write_channel_trace(std::ostream& os, const RunReport& r);
void write_tracking_trace(std::ostream& os, const RunReport& r);
nlohmann::json tally_json(const RunReport& r);

struct SweepPoint {
    double value = 0.0;
    std::vector<std::uint64_t> seeds;
    double mean_skr_bps = 0.0;
    double std_skr_bps = 0.0;
    double mean_qber_z = 0.0;
    double mean_qber_x = 0.0;
};

struct SweepOptions {
    int replicas = 1;                     // seeds averaged per point
    std::optional<double> duration_s;     // overrides the scenario duration
    Execution exec = Execution::kParallel;
};

/// One run per (value, replica); seed = base seed + value index * replicas + replica.
std::vector<SweepPoint> sweep(const Scenario& base, std::string_view axis,
                              std::span<const double> values, const SweepOptions& opts = {});

void write_sweep_csv(std::ostream& os, std::string_view axis, std::span<const SweepPoint> points);

struct PublishedTurbulence {
    std::string source;  // preset the values were taken from
    double cn2 = 0.0;
    double fried_m = 0.0;
};

/// Published values of the preset whose link length matches (within 1%).
std::optional<PublishedTurbulence> published_for_length(double link_length_m);

struct TraceAnalysis {
    std::size_t samples = 0;
    double wavelength_m = 0.0;
    double link_length_m = 0.0;
    TurbulenceEstimate estimate;
    std::optional<PublishedTurbulence> published;
    double cn2_relative_deviation = 0.0;
    double fried_relative_deviation = 0.0;
    bool discrepancy = false;
};

inline constexpr double kDiscrepancyTolerance = 0.10;

TraceAnalysis analyze_scintillation(double sigma_i2, double wavelength_m, double link_length_m,
                                    std::optional<PublishedTurbulence> published);
TraceAnalysis analyze_trace(std::span<const double> intensity, double wavelength_m,
                            double link_length_m, std::optional<PublishedTurbulence> published);

/// Reads intensity samples: a single numeric column, or the `intensity` column of a
/// CSV with a header row. DataError with the line number on malformed input.
std::vector<double> read_intensity_csv(std::istream& in, std::string_view origin);

nlohmann::json to_json(const TraceAnalysis& a);

}  // namespace fsqkd
