// Command-line front end: simulate, sweep, turbulence, track, keyrate, lint.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fsqkd/errors.hpp"
#include "fsqkd/harness.hpp"
#include "fsqkd/keyrate.hpp"
#include "fsqkd/scenario.hpp"

using namespace fsqkd;

namespace {

int code(ExitCode c) { return static_cast<int>(c); }

Scenario with_overrides(Scenario s, std::optional<std::uint64_t> seed, std::optional<int> blocks,
                        std::optional<double> duration) {
    if (!seed && !blocks && !duration) return s;
    YAML::Node doc = YAML::Clone(s.document);
    if (seed) doc["seed"] = std::to_string(*seed);
    if (blocks) doc["blocks"] = std::to_string(*blocks);
    if (duration) doc["duration_s"] = *duration;
    return parse_scenario(doc, s.name);
}

std::vector<double> parse_values(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        char* end = nullptr;
        const double v = std::strtod(item.c_str(), &end);
        if (item.empty() || *end != '\0') throw ConfigError("sweep: invalid value '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("sweep: no values given");
    return out;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    return out;
}

int cmd_simulate(const std::string& scenario, std::optional<std::uint64_t> seed, std::optional<int> blocks,
                 std::optional<double> duration, const std::string& out_dir, bool events, bool serial) {
    const Scenario s = with_overrides(load_scenario(scenario), seed, blocks, duration);
    RunOptions opts;
    opts.exec = serial ? Execution::kSerial : Execution::kParallel;
    std::ofstream events_file;
    if (events) {
        if (out_dir.empty()) throw ConfigError("--events requires --out");
        std::filesystem::create_directories(out_dir);
        events_file = open_out((std::filesystem::path(out_dir) / "events.csv").string());
        events_file << "block,slot,detector,bin,t_ns\n";
        opts.events = &events_file;
    }
    const RunReport rep = run_scenario(s, opts);
    if (out_dir.empty()) {
        std::cout << report_string(rep);
    } else {
        write_outputs(rep, out_dir);
        std::printf("%s: mean SKR %.6g bps, QBER_Z %.4g, QBER_X %.4g, visibility %.4g -> %s\n", s.name.c_str(),
                    rep.mean_skr_bps, rep.mean_qber_z, rep.mean_qber_x, rep.visibility, out_dir.c_str());
    }
    return rep.mean_skr_bps > 0.0 ? code(ExitCode::kOk) : code(ExitCode::kBoundFailure);
}

int cmd_sweep(const std::string& scenario, const std::string& axis, const std::string& values, int replicas,
              std::optional<double> duration, const std::string& out) {
    const Scenario s = load_scenario(scenario);
    const auto v = parse_values(values);
    SweepOptions opts;
    opts.replicas = replicas;
    opts.duration_s = duration;
    const auto points = sweep(s, axis, v, opts);
    if (out.empty()) {
        write_sweep_csv(std::cout, axis, points);
    } else {
        auto f = open_out(out);
        write_sweep_csv(f, axis, points);
    }
    return code(ExitCode::kOk);
}

std::optional<PublishedTurbulence> reference_for(const std::string& ref, double length_m) {
    if (ref == "none") return std::nullopt;
    if (ref == "auto") return published_for_length(length_m);
    const Scenario s = load_scenario(ref);
    if (!s.turbulence.published_cn2 || !s.turbulence.published_fried_m) {
        throw ConfigError("scenario '" + ref + "' carries no published turbulence values");
    }
    return PublishedTurbulence{s.name, *s.turbulence.published_cn2, *s.turbulence.published_fried_m};
}

int cmd_analyze(const std::string& trace, std::optional<double> sigma_i2, double wavelength_nm, double length_m,
                const std::string& reference) {
    const auto published = reference_for(reference, length_m);
    TraceAnalysis a;
    if (sigma_i2) {
        if (!trace.empty()) throw ConfigError("give either a trace file or --sigma-i2, not both");
        a = analyze_scintillation(*sigma_i2, wavelength_nm * 1e-9, length_m, published);
    } else {
        if (trace.empty()) throw ConfigError("turbulence analyze needs a trace file or --sigma-i2");
        std::ifstream in(trace);
        if (!in) throw DataError("cannot open trace '" + trace + "'");
        const auto samples = read_intensity_csv(in, trace);
        a = analyze_trace(samples, wavelength_nm * 1e-9, length_m, published);
    }
    std::cout << to_json(a).dump(2) << '\n';
    if (a.discrepancy) {
        std::fprintf(stderr, "warning: estimate deviates from the published %s values (C_n^2 %.3g vs %.3g)\n",
                     a.published->source.c_str(), a.estimate.cn2, a.published->cn2);
    }
    return code(ExitCode::kOk);
}

int cmd_synthesize(double sigma_i2, double duration, double dt_ms, double corr_ms, std::uint64_t seed,
                   const std::string& out) {
    TurbulenceParams p;
    p.target_scintillation = sigma_i2;
    p.scintillation_corr_time_s = corr_ms * 1e-3;
    Rng rng(derive_seed(seed, Stream::kTurbulence));
    const auto series = synthesize_turbulence(p, duration, dt_ms * 1e-3, rng);
    std::ofstream file;
    std::ostream& os = out.empty() ? std::cout : (file = open_out(out), file);
    os << "t_s,intensity\n";
    char buf[64];
    for (std::size_t i = 0; i < series.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g\n", static_cast<double>(i) * series.dt_s, series.intensity[i]);
        os << buf;
    }
    return code(ExitCode::kOk);
}

int cmd_track(const std::string& scenario, const std::string& mode, std::optional<std::uint64_t> seed,
              double duration, bool tune, const std::string& out) {
    Scenario s = with_overrides(load_scenario(scenario), seed, std::nullopt, std::nullopt);
    if (mode != "open" && mode != "closed") throw ConfigError("--mode must be open or closed");
    Rng turb(derive_seed(s.seed, Stream::kTurbulence, 0));
    const auto series = synthesize_turbulence(s.turbulence.params, duration, s.dt_s, turb);
    LoopConfig cfg = s.tracking;
    nlohmann::json j{{"scenario", s.name}, {"seed", s.seed}, {"duration_s", duration}};
    if (tune) {
        const GainGrid grid = default_gain_grid();
        cfg.mode = LoopMode::kClosed;
        const TuneResult t = tune_gains(series, cfg, grid, derive_seed(s.seed, Stream::kTuning), Execution::kParallel);
        cfg.gains = t.best;
        j["tuned"] = {{"kp", t.best.x.kp}, {"ki", t.best.x.ki}, {"kd", t.best.x.kd},
                      {"mean_error_m", t.best_mean_error_m}};
    }
    cfg.mode = mode == "open" ? LoopMode::kOpen : LoopMode::kClosed;
    Rng rng(derive_seed(s.seed, Stream::kTracking, 0));
    const LoopReport rep = run_loop(series, cfg, rng);
    j["mode"] = to_string(rep.mode);
    j["gains"] = {{"kp", cfg.gains.x.kp}, {"ki", cfg.gains.x.ki}, {"kd", cfg.gains.x.kd}};
    j["mean_error_m"] = rep.mean_error_m;
    j["std_error_m"] = rep.std_error_m;
    j["mean_coupling"] = rep.mean_coupling;
    j["unstable"] = rep.unstable;
    std::cout << j.dump(2) << '\n';
    if (!out.empty()) {
        auto f = open_out(out);
        write_loop_trace(f, rep, series.dt_s);
    }
    return code(rep.unstable ? ExitCode::kData : ExitCode::kOk);
}

int cmd_keyrate(const std::string& path, const std::string& scenario, std::optional<std::uint64_t> block_nz,
                const std::string& ec_mode, bool asymptotic) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open tally '" + path + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": " + e.what());
    }
    SourceConfig src;
    FiniteKeyParams fk;
    if (!scenario.empty()) {
        const Scenario s = load_scenario(scenario);
        src = s.source;
        fk = s.finite_key;
    } else if (doc.is_object() && doc.contains("decoy")) {
        const auto& d = doc.at("decoy");
        src.mu_signal = d.value("mu_signal", src.mu_signal);
        src.mu_decoy = d.value("mu_decoy", src.mu_decoy);
        src.p_signal = d.value("p_signal", src.p_signal);
    }
    if (!ec_mode.empty()) fk.ec_mode = parse_ec_mode(ec_mode);
    if (asymptotic) fk.statistics = Statistics::kAsymptotic;

    std::vector<SiftedTally> tallies;
    if (doc.is_object() && doc.contains("blocks")) {
        for (const auto& b : doc.at("blocks")) tallies.push_back(b.at(block_nz ? "raw" : "block").get<SiftedTally>());
    } else {
        tallies.push_back(doc.get<SiftedTally>());
    }
    nlohmann::json out = nlohmann::json::array();
    bool any_key = false;
    for (auto t : tallies) {
        if (block_nz) {
            fk.block_nz = *block_nz;
            t = scale_to_block(t, *block_nz);
        }
        const KeyReport r = analyze_block(t, src, fk);
        any_key = any_key || r.key_length_bits > 0.0;
        nlohmann::json j;
        to_json(j, r);
        out.push_back(j);
    }
    std::cout << (out.size() == 1 ? out[0] : out).dump(2) << '\n';
    return code(any_key ? ExitCode::kOk : ExitCode::kBoundFailure);
}

int cmd_lint(std::vector<std::string> targets) {
    if (targets.empty()) targets = preset_names();
    int failures = 0;
    for (const auto& t : targets) {
        const Scenario s = load_scenario(t);
        const auto issues = lint_scenario(s.document);
        for (const auto& i : issues) std::printf("%s: %s\n", t.c_str(), i.c_str());
        if (issues.empty()) std::printf("%s: ok\n", t.c_str());
        failures += issues.empty() ? 0 : 1;
    }
    return code(failures ? ExitCode::kConfig : ExitCode::kOk);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Free-space time-bin QKD link simulator"};
    app.require_subcommand(1);

    std::string scenario, out, axis, values, trace, reference = "auto", mode = "closed", tally, ec_mode;
    std::optional<std::uint64_t> seed, block_nz;
    std::optional<int> blocks;
    std::optional<double> duration, sigma_i2;
    double wavelength_nm = 1310.10, length_m = 500.0, track_duration = 60.0;
    double syn_sigma = 2.12e-4, syn_duration = 60.0, syn_dt_ms = 1.0, syn_corr_ms = 10.0;
    std::uint64_t syn_seed = 1;
    int replicas = 1;
    bool events = false, serial = false, tune = false, asymptotic = false;
    std::vector<std::string> lint_targets;

    auto* sim = app.add_subcommand("simulate", "Run a scenario end to end");
    sim->add_option("scenario", scenario, "Preset name or scenario file")->required();
    sim->add_option("--seed", seed, "Override the scenario seed");
    sim->add_option("--blocks", blocks, "Number of key blocks");
    sim->add_option("--duration", duration, "Simulated seconds per block");
    sim->add_option("--out", out, "Output directory for report and traces");
    sim->add_flag("--events", events, "Also export detection events (requires --out)");
    sim->add_flag("--serial", serial, "Run the detection kernel single-threaded");

    auto* sw = app.add_subcommand("sweep", "Sweep one numeric scenario parameter");
    sw->add_option("scenario", scenario, "Preset name or scenario file")->required();
    sw->add_option("--axis", axis, "Dotted parameter path, e.g. budget.total_loss_db")->required();
    sw->add_option("--values", values, "Comma-separated values")->required();
    sw->add_option("--replicas", replicas, "Seeds averaged per point")->check(CLI::PositiveNumber);
    sw->add_option("--duration", duration, "Simulated seconds per run");
    sw->add_option("--out", out, "CSV output file");

    auto* turb = app.add_subcommand("turbulence", "Turbulence analysis and synthesis");
    turb->require_subcommand(1);
    auto* an = turb->add_subcommand("analyze", "Estimate C_n^2 and r0 from an intensity trace");
    an->add_option("trace", trace, "CSV intensity trace");
    an->add_option("--sigma-i2", sigma_i2, "Use a scintillation index instead of a trace");
    an->add_option("--wavelength-nm", wavelength_nm, "Probe wavelength in nm");
    an->add_option("--length-m", length_m, "Link length in m");
    an->add_option("--reference", reference, "Published values: auto, none or a preset name");
    auto* syn = turb->add_subcommand("synthesize", "Write a synthetic intensity trace");
    syn->add_option("--sigma-i2", syn_sigma, "Target scintillation index");
    syn->add_option("--duration", syn_duration, "Seconds");
    syn->add_option("--dt-ms", syn_dt_ms, "Sample interval in ms");
    syn->add_option("--corr-time-ms", syn_corr_ms, "Correlation time in ms");
    syn->add_option("--seed", syn_seed, "Seed");
    syn->add_option("--out", out, "CSV output file");

    auto* trk = app.add_subcommand("track", "Run the fine-pointing loop");
    trk->add_option("scenario", scenario, "Preset name or scenario file")->required();
    trk->add_option("--mode", mode, "open or closed");
    trk->add_option("--seed", seed, "Override the scenario seed");
    trk->add_option("--duration", track_duration, "Simulated seconds");
    trk->add_flag("--tune", tune, "Grid-search PID gains first");
    trk->add_option("--out", out, "Trace CSV output file");

    auto* kr = app.add_subcommand("keyrate", "Finite-key analysis of a sifted tally");
    kr->add_option("--tally", tally, "Tally JSON")->required();
    kr->add_option("--scenario", scenario, "Take source and finite-key parameters from a scenario");
    kr->add_option("--block-nz", block_nz, "Rescale raw tallies to this Z block size");
    kr->add_option("--ec-mode", ec_mode, "sifted_block or paper_literal");
    kr->add_flag("--asymptotic", asymptotic, "Disable finite-size corrections");

    auto* lint = app.add_subcommand("lint", "Check provenance labels of scenarios");
    lint->add_option("scenarios", lint_targets, "Presets or files (default: all presets)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : code(ExitCode::kConfig);
    }

    try {
        if (*sim) return cmd_simulate(scenario, seed, blocks, duration, out, events, serial);
        if (*sw) return cmd_sweep(scenario, axis, values, replicas, duration, out);
        if (*an) return cmd_analyze(trace, sigma_i2, wavelength_nm, length_m, reference);
        if (*syn) return cmd_synthesize(syn_sigma, syn_duration, syn_dt_ms, syn_corr_ms, syn_seed, out);
        if (*trk) return cmd_track(scenario, mode, seed, track_duration, tune, out);
        if (*kr) return cmd_keyrate(tally, scenario, block_nz, ec_mode, asymptotic);
        if (*lint) return cmd_lint(lint_targets);
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return code(e.exit_code());
    } catch (const ContractViolation& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return code(ExitCode::kConfig);
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return code(ExitCode::kData);
    } catch (const YAML::Exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return code(ExitCode::kConfig);
    }
    return code(ExitCode::kOk);
}
