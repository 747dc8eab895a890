#include "fsqkd/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fsqkd/errors.hpp"
#include "fsqkd/kernel.hpp"
#include "fsqkd/random.hpp"

namespace fsqkd {

namespace {

template <class F>
auto in_stage(std::string_view stage, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const Error& e) {
        throw StageError(stage, e.what(), e.exit_code());
    } catch (const ContractViolation& e) {
        throw StageError(stage, e.what(), ExitCode::kConfig);
    }
}

std::string g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

nlohmann::json to_json(const LoopSummary& s) {
    return {{"mode", to_string(s.mode)},
            {"mean_error_m", s.mean_error_m},
            {"std_error_m", s.std_error_m},
            {"mean_coupling", s.mean_coupling},
            {"unstable", s.unstable}};
}

nlohmann::json to_json(const TurbulenceEstimate& e) {
    nlohmann::json j{{"sigma_i2", e.sigma_i2},
                     {"sigma_ln2", e.sigma_ln2},
                     {"cn2", e.cn2},
                     {"regime", to_string(e.regime)},
                     {"infinite_resolution", !e.fried_m.has_value()}};
    j["fried_parameter_m"] = e.fried_m ? nlohmann::json(*e.fried_m) : nlohmann::json(nullptr);
    return j;
}

nlohmann::json to_json(const ResolvedBudget& b) {
    nlohmann::json comps = nlohmann::json::object();
    for (const auto& [label, db] : b.budget.components()) comps[label] = db;
    return {{"components_db", comps},
            {"total_db", b.budget.total_db()},
            {"lumped", b.lumped},
            {"pointing_db", b.pointing_db}};
}

constexpr double kMaxExtension = 100.0;

BlockReport run_block_for(const Scenario& s, std::uint64_t b, double duration_s, const RunOptions& opts) {
    BlockReport br;
    br.index = b;

    br.series = in_stage("turbulence", [&] {
        TurbulenceParams tp = s.turbulence.params;
        const double geom = s.budget.geometric_truncation_db.value_or(geometric_truncation_db(s.beam));
        tp.mean_transmittance =
            db_to_fraction(s.budget.window_glass_db + geom + s.budget.atmospheric_db);
        Rng rng(derive_seed(s.seed, Stream::kTurbulence, b));
        return synthesize_turbulence(tp, duration_s, s.dt_s, rng);
    });
    br.channel = in_stage("channel statistics", [&] {
        return estimate_turbulence(std::span<const double>(br.series.intensity),
                                   s.turbulence.analysis_wavelength_m, s.beam.link_length_m);
    });

    in_stage("tracking", [&] {
        Rng rng(derive_seed(s.seed, Stream::kTracking, b));
        br.loop = run_loop(br.series, s.tracking, rng);
        LoopConfig open = s.tracking;
        open.mode = LoopMode::kOpen;
        Rng open_rng(derive_seed(s.seed, Stream::kTracking, b));
        br.open_loop = summarize(run_loop(br.series, open, open_rng));
        br.tracking = summarize(br.loop);
    });

    in_stage("link budget", [&] {
        br.budget = resolve_budget(s, br.loop.mean_coupling);
        br.bin_transmittance.resize(br.series.size());
        double sum = 0.0;
        for (std::size_t i = 0; i < br.series.size(); ++i) {
            const double t = br.budget.static_transmittance * br.series.intensity[i] * br.loop.coupling[i];
            br.bin_transmittance[i] = std::clamp(t, 0.0, 1.0);
            sum += br.bin_transmittance[i];
        }
        br.mean_transmittance = sum / static_cast<double>(br.series.size());
    });

    const BlockResult det = in_stage("detection", [&] {
        const PulseSource source(s.source, derive_seed(s.seed, Stream::kPulseTrain, b));
        EventSink sink;
        if (opts.events) {
            std::ostream& os = *opts.events;
            sink = [&os, b](const DetectionEvent& e) {
                os << b << ',' << e.slot << ',' << to_string(e.detector) << ',' << to_string(e.bin) << ','
                   << g17(e.timestamp_s * 1e9) << '\n';
            };
        }
        return simulate_block(source, s.receiver, {br.bin_transmittance, s.dt_s},
                              derive_seed(s.seed, Stream::kDetection, b), opts.exec, sink);
    });
    br.raw_tally = det.tally;
    br.sift = det.sift;
    br.detection = det.detection;
    br.slots = det.slots;
    br.simulated_s = det.duration_s;

    in_stage("key rate", [&] {
        br.block_tally = br.raw_tally.total_n(Basis::kZ) > 0
                             ? scale_to_block(br.raw_tally, s.finite_key.block_nz)
                             : br.raw_tally;
        br.key = analyze_block(br.block_tally, s.source, s.finite_key);
    });
    return br;
}

// Too few sifted Z events make the rescaled block statistics noisy; such a block is
// re-simulated once over a proportionally longer duration (same seeds).
BlockReport run_block(const Scenario& s, std::uint64_t b, const RunOptions& opts) {
    std::ostringstream events;
    RunOptions attempt = opts;
    if (opts.events) attempt.events = &events;
    BlockReport br = run_block_for(s, b, s.duration_s, attempt);
    const auto nz = br.raw_tally.total_n(Basis::kZ);
    if (s.min_sifted_z > 0 && nz > 0 && nz < s.min_sifted_z) {
        const double factor = std::min(
            kMaxExtension, std::ceil(1.05 * static_cast<double>(s.min_sifted_z) / static_cast<double>(nz)));
        events.str({});
        br = run_block_for(s, b, s.duration_s * factor, attempt);
    }
    if (opts.events) *opts.events << events.str();
    return br;
}

}  // namespace

double geometric_truncation_db(const BeamParams& beam) {
    return fraction_to_db(aperture_transmission(beam_radius(beam.link_length_m, beam), beam.aperture_diameter_m));
}

ResolvedBudget resolve_budget(const Scenario& s, double mean_coupling) {
    if (!(mean_coupling > 0.0 && mean_coupling <= 1.0)) {
        throw DataError("budget: mean coupling efficiency outside (0, 1]");
    }
    ResolvedBudget r;
    r.pointing_db = fraction_to_db(mean_coupling);
    const double geom = s.budget.geometric_truncation_db.value_or(geometric_truncation_db(s.beam));
    const double fixed = s.budget.window_glass_db + geom + s.budget.atmospheric_db;
    const double smf = s.budget.total_loss_db - fixed - r.pointing_db;
    if (smf >= 0.0) {
        r.budget.add("window_glass", s.budget.window_glass_db);
        r.budget.add("geometric_truncation", geom);
        r.budget.add("atmospheric", s.budget.atmospheric_db);
        r.budget.add("smf_coupling", smf);
        r.static_transmittance = db_to_fraction(fixed + smf);
    } else {
        const double lumped = s.budget.total_loss_db - r.pointing_db;
        if (lumped < 0.0) {
            throw ConfigError("budget: total loss " + g17(s.budget.total_loss_db) +
                              " dB is below the mean pointing loss " + g17(r.pointing_db) + " dB");
        }
        r.lumped = true;
        r.budget.add("lumped", lumped);
        r.static_transmittance = db_to_fraction(lumped);
    }
    r.budget.add("pointing", r.pointing_db);
    return r;
}

LoopSummary summarize(const LoopReport& r) noexcept {
    return {r.mode, r.mean_error_m, r.std_error_m, r.mean_coupling, r.unstable};
}

RunReport run_scenario(const Scenario& s, const RunOptions& opts) {
    in_stage("scenario", [&] { s.validate(); });
    RunReport rep;
    rep.scenario = s;
    for (int b = 0; b < s.blocks; ++b) rep.blocks.push_back(run_block(s, static_cast<std::uint64_t>(b), opts));

    SiftedTally pooled;
    for (const auto& b : rep.blocks) {
        rep.mean_skr_bps += b.key.skr_bps;
        rep.mean_qber_z += b.key.qber_z;
        rep.mean_qber_x += b.key.qber_x;
        pooled += b.raw_tally;
    }
    const auto n = static_cast<double>(rep.blocks.size());
    rep.mean_skr_bps /= n;
    rep.mean_qber_z /= n;
    rep.mean_qber_x /= n;
    const auto nx = pooled.total_n(Basis::kX);
    rep.visibility = nx > 0 ? 1.0 - 2.0 * static_cast<double>(pooled.total_m(Basis::kX)) / static_cast<double>(nx) : 0.0;
    return rep;
}

nlohmann::json to_json(const RunReport& r) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : r.blocks) {
        nlohmann::json key;
        to_json(key, b.key);
        nlohmann::json raw;
        to_json(raw, b.raw_tally);
        nlohmann::json scaled;
        to_json(scaled, b.block_tally);
        blocks.push_back({
            {"index", b.index},
            {"key", key},
            {"raw_tally", raw},
            {"block_tally", scaled},
            {"slots", b.slots},
            {"simulated_s", b.simulated_s},
            {"mean_transmittance", b.mean_transmittance},
            {"budget", to_json(b.budget)},
            {"channel", to_json(b.channel)},
            {"tracking", to_json(b.tracking)},
            {"open_loop", to_json(b.open_loop)},
            {"diagnostics",
             {{"multi_click_discards", b.sift.multi_click_slots},
              {"gating_discards", b.detection.gated_out},
              {"dead_time_suppressions", b.detection.dead_time_suppressed},
              {"dark_counts", b.detection.dark_counts},
              {"raw_clicks", b.detection.raw_clicks},
              {"basis_mismatch", b.sift.basis_mismatch},
              {"side_bin_clicks", b.sift.side_bin_clicks},
              {"true_z_vacuum", b.sift.true_z_vacuum},
              {"true_z_single", b.sift.true_z_single},
              {"true_x_single", b.sift.true_x_single}}},
        });
    }
    return {{"scenario", yaml_to_json(r.scenario.document)},
            {"seed", r.scenario.seed},
            {"blocks", blocks},
            {"summary",
             {{"mean_skr_bps", r.mean_skr_bps},
              {"mean_qber_z", r.mean_qber_z},
              {"mean_qber_x", r.mean_qber_x},
              {"visibility", r.visibility},
              {"block_count", r.blocks.size()}}}};
}

std::string report_string(const RunReport& r) { return to_json(r).dump(2) + "\n"; }

void write_channel_trace(std::ostream& os, const RunReport& r) {
    os << "block,t_s,intensity,transmittance,offset_x_m,offset_y_m\n";
    for (const auto& b : r.blocks) {
        for (std::size_t i = 0; i < b.series.size(); ++i) {
            os << b.index << ',' << g17(static_cast<double>(i) * b.series.dt_s) << ',' << g17(b.series.intensity[i])
               << ',' << g17(b.bin_transmittance[i]) << ',' << g17(b.series.offset_x_m[i]) << ','
               << g17(b.series.offset_y_m[i]) << '\n';
        }
    }
}

void write_tracking_trace(std::ostream& os, const RunReport& r) {
    os << "block,t_s,ex_m,ey_m,ax,ay,eta\n";
    for (const auto& b : r.blocks) {
        const LoopReport& l = b.loop;
        for (std::size_t i = 0; i < l.trace.size(); ++i) {
            os << b.index << ',' << g17(static_cast<double>(i) * b.series.dt_s) << ',' << g17(l.trace[i].ex) << ','
               << g17(l.trace[i].ey) << ',' << g17(l.actuation[i].x) << ',' << g17(l.actuation[i].y) << ','
               << g17(l.coupling[i]) << '\n';
        }
    }
}

nlohmann::json tally_json(const RunReport& r) {
    nlohmann::json blocks = nlohmann::json::array();
    for (const auto& b : r.blocks) {
        nlohmann::json raw;
        to_json(raw, b.raw_tally);
        nlohmann::json scaled;
        to_json(scaled, b.block_tally);
        blocks.push_back({{"index", b.index}, {"raw", raw}, {"block", scaled}});
    }
    const SourceConfig& src = r.scenario.source;
    return {{"decoy", {{"mu_signal", src.mu_signal}, {"mu_decoy", src.mu_decoy}, {"p_signal", src.p_signal}}},
            {"blocks", blocks}};
}

void write_outputs(const RunReport& r, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());
    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) throw ConfigError("cannot write '" + (dir / name).string() + "'");
        return out;
    };
    open("report.json") << report_string(r);
    open("tally.json") << tally_json(r).dump(2) << '\n';
    auto channel = open("channel_trace.csv");
    write_channel_trace(channel, r);
    auto tracking = open("tracking_trace.csv");
    write_tracking_trace(tracking, r);
}

std::vector<SweepPoint> sweep(const Scenario& base, std::string_view axis, std::span<const double> values,
                              const SweepOptions& opts) {
    if (opts.replicas < 1) throw ConfigError("sweep: replicas must be >= 1");
    // Fail on an unknown path before any run starts.
    (void)with_override(base.document, axis, values.empty() ? 0.0 : values.front());
    std::vector<SweepPoint> points;
    for (std::size_t i = 0; i < values.size(); ++i) {
        SweepPoint p;
        p.value = values[i];
        std::vector<double> skr;
        for (int r = 0; r < opts.replicas; ++r) {
            const std::uint64_t seed = base.seed + i * static_cast<std::uint64_t>(opts.replicas) + static_cast<std::uint64_t>(r);
            YAML::Node doc = with_override(base.document, axis, values[i]);
            doc["seed"] = std::to_string(seed);
            if (opts.duration_s) doc["duration_s"] = g17(*opts.duration_s);
            const Scenario s = parse_scenario(doc, base.name + " " + std::string(axis) + "=" + g17(values[i]));
            const RunReport rep = run_scenario(s, {opts.exec, nullptr});
            p.seeds.push_back(seed);
            skr.push_back(rep.mean_skr_bps);
            p.mean_qber_z += rep.mean_qber_z;
            p.mean_qber_x += rep.mean_qber_x;
        }
        const auto n = static_cast<double>(skr.size());
        for (double v : skr) p.mean_skr_bps += v;
        p.mean_skr_bps /= n;
        p.mean_qber_z /= n;
        p.mean_qber_x /= n;
        if (skr.size() > 1) {
            double ss = 0.0;
            for (double v : skr) ss += (v - p.mean_skr_bps) * (v - p.mean_skr_bps);
            p.std_skr_bps = std::sqrt(ss / (n - 1.0));
        }
        points.push_back(std::move(p));
    }
    return points;
}

void write_sweep_csv(std::ostream& os, std::string_view axis, std::span<const SweepPoint> points) {
    os << axis << ",runs,mean_skr_bps,std_skr_bps,mean_qber_z,mean_qber_x\n";
    for (const auto& p : points) {
        os << g17(p.value) << ',' << p.seeds.size() << ',' << g17(p.mean_skr_bps) << ',' << g17(p.std_skr_bps) << ','
           << g17(p.mean_qber_z) << ',' << g17(p.mean_qber_x) << '\n';
    }
}

std::optional<PublishedTurbulence> published_for_length(double link_length_m) {
    for (const auto& name : preset_names()) {
        const Scenario s = load_scenario(name);
        if (std::abs(s.beam.link_length_m - link_length_m) <= 0.01 * s.beam.link_length_m &&
            s.turbulence.published_cn2 && s.turbulence.published_fried_m) {
            return PublishedTurbulence{name, *s.turbulence.published_cn2, *s.turbulence.published_fried_m};
        }
    }
    return std::nullopt;
}

namespace {

TraceAnalysis finish_analysis(TraceAnalysis a) {
    if (!a.published) return a;
    a.cn2_relative_deviation = std::abs(a.estimate.cn2 - a.published->cn2) / a.published->cn2;
    a.fried_relative_deviation =
        a.estimate.fried_m ? std::abs(*a.estimate.fried_m - a.published->fried_m) / a.published->fried_m
                           : std::numeric_limits<double>::infinity();
    a.discrepancy = a.cn2_relative_deviation > kDiscrepancyTolerance ||
                    a.fried_relative_deviation > kDiscrepancyTolerance;
    return a;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) {
        const auto b = field.find_first_not_of(" \t\r");
        const auto e = field.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string() : field.substr(b, e - b + 1));
    }
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

bool to_number(const std::string& s, double& v) {
    if (s.empty()) return false;
    char* end = nullptr;
    v = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size() && std::isfinite(v);
}

}  // namespace

TraceAnalysis analyze_scintillation(double sigma_i2, double wavelength_m, double link_length_m,
                                    std::optional<PublishedTurbulence> published) {
    if (!(sigma_i2 >= 0.0) || !std::isfinite(sigma_i2)) throw DataError("scintillation index must be finite and >= 0");
    TraceAnalysis a;
    a.wavelength_m = wavelength_m;
    a.link_length_m = link_length_m;
    a.estimate = estimate_turbulence(sigma_i2, wavelength_m, link_length_m);
    a.published = std::move(published);
    return finish_analysis(std::move(a));
}

TraceAnalysis analyze_trace(std::span<const double> intensity, double wavelength_m, double link_length_m,
                            std::optional<PublishedTurbulence> published) {
    TraceAnalysis a;
    a.samples = intensity.size();
    a.wavelength_m = wavelength_m;
    a.link_length_m = link_length_m;
    a.estimate = estimate_turbulence(intensity, wavelength_m, link_length_m);
    a.published = std::move(published);
    return finish_analysis(std::move(a));
}

std::vector<double> read_intensity_csv(std::istream& in, std::string_view origin) {
    const std::string where(origin);
    std::vector<double> out;
    std::string line;
    std::size_t lineno = 0;
    std::size_t columns = 0;
    std::size_t column = 0;
    bool started = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
        const auto fields = split_csv(line);
        if (!started) {
            started = true;
            columns = fields.size();
            double v = 0.0;
            const bool numeric = std::all_of(fields.begin(), fields.end(), [&](const std::string& f) { return to_number(f, v); });
            if (!numeric) {
                const auto it = std::find(fields.begin(), fields.end(), "intensity");
                if (it != fields.end()) {
                    column = static_cast<std::size_t>(it - fields.begin());
                } else if (columns == 1) {
                    column = 0;
                } else {
                    throw DataError(where + ":" + std::to_string(lineno) + ": header has no 'intensity' column");
                }
                continue;
            }
            if (columns != 1) {
                throw DataError(where + ":" + std::to_string(lineno) +
                                ": multi-column data needs a header naming the 'intensity' column");
            }
        }
        if (fields.size() != columns) {
            throw DataError(where + ":" + std::to_string(lineno) + ": expected " + std::to_string(columns) +
                            " fields, found " + std::to_string(fields.size()));
        }
        double v = 0.0;
        if (!to_number(fields[column], v)) {
            throw DataError(where + ":" + std::to_string(lineno) + ": invalid intensity value '" + fields[column] + "'");
        }
        if (v < 0.0) throw DataError(where + ":" + std::to_string(lineno) + ": negative intensity");
        out.push_back(v);
    }
    if (out.empty()) throw DataError(where + ": no intensity samples");
    return out;
}

nlohmann::json to_json(const TraceAnalysis& a) {
    nlohmann::json j = to_json(a.estimate);
    j["samples"] = a.samples;
    j["wavelength_nm"] = a.wavelength_m * 1e9;
    j["link_length_m"] = a.link_length_m;
    if (a.published) {
        j["published"] = {{"source", a.published->source}, {"cn2", a.published->cn2}, {"fried_parameter_m", a.published->fried_m}};
        j["cn2_relative_deviation"] = a.cn2_relative_deviation;
        j["fried_relative_deviation"] =
            std::isfinite(a.fried_relative_deviation) ? nlohmann::json(a.fried_relative_deviation) : nlohmann::json(nullptr);
        j["discrepancy"] = a.discrepancy;
        j["tolerance"] = kDiscrepancyTolerance;
    } else {
        j["published"] = nullptr;
        j["discrepancy"] = false;
    }
    return j;
}

}  // namespace fsqkd
