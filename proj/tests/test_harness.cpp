#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "fsqkd/errors.hpp"
#include "fsqkd/harness.hpp"
#include "fsqkd/scenario.hpp"

using namespace fsqkd;

namespace {

Scenario short_link500(double duration_s = 0.2) {
    const Scenario base = load_scenario("link500");
    YAML::Node doc = with_override(base.document, "duration_s", duration_s);
    doc = with_override(doc, "min_sifted_z", 0);
    return parse_scenario(doc, "short link500");
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
    const auto at = text.find(from);
    EXPECT_NE(at, std::string::npos) << from;
    if (at != std::string::npos) text.replace(at, from.size(), to);
    return text;
}

std::string preset(const char* name) { return std::string(*preset_text(name)); }

}  // namespace

TEST(scenario, presets_parse_and_lint_clean) {
    for (const auto& name : preset_names()) {
        const Scenario s = load_scenario(name);
        EXPECT_EQ(s.name, name);
        EXPECT_TRUE(lint_scenario(s.document).empty()) << name;
    }
    const Scenario s = load_scenario("link500");
    EXPECT_DOUBLE_EQ(s.beam.link_length_m, 500.0);
    EXPECT_DOUBLE_EQ(s.source.bin_delay_s, 800e-12);
    EXPECT_DOUBLE_EQ(s.receiver.imzi.intrinsic_visibility, 0.85);
    EXPECT_EQ(s.finite_key.block_nz, 10'000'000U);
    EXPECT_FALSE(s.budget.geometric_truncation_db.has_value());
}

TEST(scenario, parse_errors_are_config_errors) {
    EXPECT_THROW(parse_scenario_text("name: [unclosed", "bad.yaml"), ConfigError);
    EXPECT_THROW(parse_scenario_text("- a\n- b\n", "list.yaml"), ConfigError);
    EXPECT_THROW(parse_scenario_text(replace(preset("link500"), "seed: 1", "seed: 1\nsede: 2"), "typo"),
                 ConfigError);
    EXPECT_THROW(parse_scenario_text(replace(preset("link500"), "mu_decoy: 0.1", "mu_decoy: high"), "nan"),
                 ConfigError);
    EXPECT_THROW(parse_scenario_text(replace(preset("link500"), "mode: closed", "mode: ajar"), "mode"),
                 ConfigError);
    EXPECT_THROW(load_scenario("/no/such/file.yaml"), ConfigError);
    try {
        parse_scenario_text(replace(preset("link500"), "  link_length_m: 500.0\n", ""), "origin.yaml");
        FAIL() << "missing key accepted";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("origin.yaml"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("link_length_m"), std::string::npos);
    }
}

TEST(scenario, lint_reports_missing_and_stale_labels) {
    auto text = replace(preset("link500"), "  source.mu_decoy: calibration\n", "");
    EXPECT_FALSE(lint_scenario(YAML::Load(text)).empty());
    text = replace(preset("link500"), "  seed: convention\n", "  seed: convention\n  source.mu_trial: paper\n");
    EXPECT_FALSE(lint_scenario(YAML::Load(text)).empty());
    text = replace(preset("link500"), "  seed: convention\n", "  seed: guess\n");
    EXPECT_FALSE(lint_scenario(YAML::Load(text)).empty());
}

TEST(scenario, overrides) {
    const Scenario base = load_scenario("link500");
    const Scenario s = parse_scenario(with_override(base.document, "budget.total_loss_db", 25.0), "o");
    EXPECT_DOUBLE_EQ(s.budget.total_loss_db, 25.0);
    EXPECT_DOUBLE_EQ(base.budget.total_loss_db, 16.5);
    EXPECT_THROW(with_override(base.document, "budget.total_loss", 25.0), ConfigError);
    EXPECT_THROW(with_override(base.document, "tracking.mode", 1.0), ConfigError);
    EXPECT_THROW(with_override(base.document, "nothing.here", 1.0), ConfigError);
}

TEST(harness, geometric_truncation_at_500m) {
    const Scenario s = load_scenario("link500");
    EXPECT_NEAR(geometric_truncation_db(s.beam), 4.265, 0.01);
}

TEST(harness, budget_components_and_lumped_fallback) {
    Scenario s = load_scenario("link500");
    const auto r = resolve_budget(s, 0.8);
    EXPECT_FALSE(r.lumped);
    EXPECT_NEAR(r.budget.total_db(), 16.5, 1e-9);
    EXPECT_NEAR(r.pointing_db, fraction_to_db(0.8), 1e-12);
    EXPECT_GT(*r.budget.component("smf_coupling"), 0.0);

    s.budget.total_loss_db = 5.0;
    const auto l = resolve_budget(s, 0.8);
    EXPECT_TRUE(l.lumped);
    EXPECT_NEAR(l.budget.total_db(), 5.0, 1e-9);
    s.budget.total_loss_db = 0.5;
    EXPECT_THROW(resolve_budget(s, 0.8), ConfigError);
    EXPECT_THROW(resolve_budget(s, 0.0), DataError);
}

TEST(harness, run_is_deterministic_and_execution_independent) {
    const Scenario s = short_link500();
    const auto a = report_string(run_scenario(s, {Execution::kParallel, nullptr}));
    const auto b = report_string(run_scenario(s, {Execution::kParallel, nullptr}));
    const auto c = report_string(run_scenario(s, {Execution::kSerial, nullptr}));
    EXPECT_EQ(a, b);
    EXPECT_EQ(a, c);
    const auto j = nlohmann::json::parse(a);
    EXPECT_GT(j.at("summary").at("mean_skr_bps").get<double>(), 0.0);
}

TEST(harness, traces_reproduce_reported_statistics) {
    const Scenario s = short_link500();
    const RunReport r = run_scenario(s);
    std::stringstream channel;
    write_channel_trace(channel, r);
    const auto intensity = read_intensity_csv(channel, "channel_trace.csv");
    EXPECT_EQ(scintillation_index(intensity), r.blocks[0].channel.sigma_i2);

    const auto tally = tally_json(r).at("blocks").at(0).at("block").get<SiftedTally>();
    EXPECT_EQ(qber(tally, Basis::kZ), r.blocks[0].key.qber_z);
    EXPECT_EQ(qber(tally, Basis::kX), r.blocks[0].key.qber_x);
    const auto again = analyze_block(tally, s.source, s.finite_key);
    EXPECT_EQ(again.key_length_bits, r.blocks[0].key.key_length_bits);
}

TEST(harness, event_export_matches_tally) {
    const Scenario s = short_link500(0.05);
    std::ostringstream events;
    const RunReport r = run_scenario(s, {Execution::kParallel, &events});
    std::istringstream in(events.str());
    std::string line;
    std::uint64_t rows = 0;
    while (std::getline(in, line)) ++rows;
    const auto& d = r.blocks[0].detection;
    EXPECT_EQ(rows, d.raw_clicks - d.gated_out - d.dead_time_suppressed);
    EXPECT_EQ(report_string(r), report_string(run_scenario(s)));
}

TEST(harness, short_blocks_are_extended) {
    const Scenario base = load_scenario("link500");
    YAML::Node doc = with_override(base.document, "duration_s", 0.05);
    const RunReport r = run_scenario(parse_scenario(doc, "extended"));
    EXPECT_GE(r.blocks[0].raw_tally.total_n(Basis::kZ), base.min_sifted_z);
    EXPECT_GT(r.blocks[0].simulated_s, 0.05);
}

TEST(harness, write_outputs_creates_files) {
    const auto dir = std::filesystem::temp_directory_path() / "fsqkd_harness_outputs";
    std::filesystem::remove_all(dir);
    const RunReport r = run_scenario(short_link500(0.05));
    write_outputs(r, dir);
    for (const char* f : {"report.json", "tally.json", "channel_trace.csv", "tracking_trace.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    }
    std::ifstream in(dir / "report.json");
    std::stringstream ss;
    ss << in.rdbuf();
    EXPECT_EQ(ss.str(), report_string(r));
    std::filesystem::remove_all(dir);
}

TEST(harness, sweep_seeds_and_monotone_loss) {
    const Scenario s = short_link500();
    const std::vector<double> losses{16.5, 25.0};
    SweepOptions opts;
    opts.replicas = 2;
    opts.duration_s = 0.2;
    const auto pts = sweep(s, "budget.total_loss_db", losses, opts);
    ASSERT_EQ(pts.size(), 2U);
    EXPECT_EQ(pts[1].seeds, (std::vector<std::uint64_t>{s.seed + 2, s.seed + 3}));
    EXPECT_GT(pts[0].mean_skr_bps, pts[1].mean_skr_bps);
    EXPECT_THROW(sweep(s, "budget.bogus", losses, opts), ConfigError);
    std::ostringstream csv;
    write_sweep_csv(csv, "budget.total_loss_db", pts);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')),
              "budget.total_loss_db,runs,mean_skr_bps,std_skr_bps,mean_qber_z,mean_qber_x");
}

TEST(harness, intensity_csv_errors_carry_line_numbers) {
    std::istringstream ok("t,intensity\n0,1.0\n1,1.1\n");
    EXPECT_EQ(read_intensity_csv(ok, "ok.csv").size(), 2U);
    std::istringstream plain("# comment\n1.0\n0.9\n");
    EXPECT_EQ(read_intensity_csv(plain, "plain.csv").size(), 2U);
    std::istringstream bad("intensity\n1.0\nabc\n");
    try {
        read_intensity_csv(bad, "bad.csv");
        FAIL() << "malformed value accepted";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("bad.csv:3"), std::string::npos) << e.what();
    }
    std::istringstream ragged("a,intensity\n1,2\n3\n");
    EXPECT_THROW(read_intensity_csv(ragged, "r.csv"), DataError);
    std::istringstream empty("intensity\n");
    EXPECT_THROW(read_intensity_csv(empty, "e.csv"), DataError);
    std::istringstream negative("-1\n");
    EXPECT_THROW(read_intensity_csv(negative, "n.csv"), DataError);
}

TEST(harness, constant_trace_has_unbounded_resolution) {
    const std::vector<double> flat(100, 1.0);
    const auto a = analyze_trace(flat, 1310.1e-9, 500.0, std::nullopt);
    EXPECT_EQ(a.estimate.cn2, 0.0);
    EXPECT_FALSE(a.estimate.fried_m.has_value());
    EXPECT_FALSE(a.discrepancy);
}

TEST(harness, published_values_flag_discrepancies) {
    const auto p500 = published_for_length(500.0);
    ASSERT_TRUE(p500.has_value());
    EXPECT_EQ(p500->source, "link500");
    EXPECT_FALSE(analyze_scintillation(2.12e-4, 1310e-9, 500.0, p500).discrepancy);
    const auto p50 = published_for_length(50.0);
    ASSERT_TRUE(p50.has_value());
    const auto a = analyze_scintillation(3.1e-5, 1310e-9, 50.0, p50);
    EXPECT_TRUE(a.discrepancy);
    EXPECT_GT(a.cn2_relative_deviation, kDiscrepancyTolerance);
    EXPECT_FALSE(published_for_length(123.0).has_value());
    EXPECT_THROW(analyze_scintillation(-1.0, 1310e-9, 50.0, std::nullopt), DataError);
}
