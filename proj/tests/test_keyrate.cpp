#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "fsqkd/errors.hpp"
#include "fsqkd/keyrate.hpp"
#include "oracles.hpp"

using namespace fsqkd;

namespace {

SiftedTally healthy_tally() {
    oracle::YieldModel m{0.02, 1e-6, 0.01};
    return oracle::expected_tally(m, 5e8, 0.5, 0.1, 0.7, 0.03);
}

DecoyParams params(Statistics s = Statistics::kFinite) {
    DecoyParams p;
    p.mu1 = 0.5;
    p.mu2 = 0.1;
    p.p_mu1 = 0.7;
    p.statistics = s;
    return p;
}

}  // namespace

TEST(keyrate, binary_entropy_values) {
    EXPECT_DOUBLE_EQ(binary_entropy(0.0), 0.0);
    EXPECT_DOUBLE_EQ(binary_entropy(1.0), 0.0);
    EXPECT_DOUBLE_EQ(binary_entropy(0.5), 1.0);
    EXPECT_NEAR(binary_entropy(0.11), 0.4999, 1e-4);
    EXPECT_NEAR(binary_entropy(0.01), 0.0807931, 1e-7);
    EXPECT_THROW(binary_entropy(-0.1), ContractViolation);
}

TEST(keyrate, hoeffding_delta_value) {
    EXPECT_NEAR(hoeffding_delta(1e6, 1e-9), std::sqrt(5e5 * std::log(19e9)), 1e-9);
}

TEST(keyrate, security_penalty_arithmetic) {
    const double want = 6.0 * std::log2(19.0 / 1e-9) + std::log2(2.0 / 1e-9);
    EXPECT_NEAR(security_penalty(1e-9, 1e-9), want, 1e-12);
    EXPECT_NEAR(security_penalty(1e-9, 1e-9), 235.77, 0.01);
}

TEST(keyrate, error_correction_leakage) {
    SiftedTally t;
    t.n_z = {7'000'000, 3'000'000};
    t.m_z = {70'000, 30'000};
    DecoyBounds b;
    b.s_z1_lower = 4e6;
    const double sifted = ec_leakage(t, b, 1.16, EcMode::kSiftedBlock);
    EXPECT_NEAR(sifted, 1e7 * 1.16 * binary_entropy(0.01), 1e-6);
    EXPECT_NEAR(sifted, 9.37e5, 1e3);
    EXPECT_NEAR(ec_leakage(t, b, 1.16, EcMode::kPaperLiteral), 4e6 * 1.16 * binary_entropy(0.01),
                1e-6);
    EXPECT_LE(ec_leakage(t, b, 1.16, EcMode::kPaperLiteral), sifted);
    EXPECT_THROW(ec_leakage(t, b, 0.9, EcMode::kSiftedBlock), ContractViolation);
}

TEST(keyrate, ec_mode_names) {
    EXPECT_EQ(parse_ec_mode("sifted_block"), EcMode::kSiftedBlock);
    EXPECT_EQ(parse_ec_mode(to_string(EcMode::kPaperLiteral)), EcMode::kPaperLiteral);
    EXPECT_THROW(parse_ec_mode("other"), ConfigError);
}

TEST(keyrate, key_length_clamps) {
    FiniteKeyParams fk;
    DecoyBounds b;
    b.failed = false;
    b.s_z0_lower = 0.0;
    b.s_z1_lower = 5e6;
    b.phi_z_upper = 0.5;
    EXPECT_EQ(key_length(b, 0.0, fk, 1e7), 0.0);
    b.s_z0_lower = 1e4;
    b.phi_z_upper = 0.0;
    EXPECT_EQ(key_length(b, 0.0, fk, 1e3), 1e3);
    EXPECT_EQ(key_length(b, 1e9, fk, 1e7), 0.0);
    b.failed = true;
    EXPECT_EQ(key_length(b, 0.0, fk, 1e7), 0.0);
}

TEST(keyrate, key_length_monotone_in_phase_error_and_qber) {
    FiniteKeyParams fk;
    DecoyBounds b;
    b.failed = false;
    b.s_z0_lower = 1e4;
    b.s_z1_lower = 5e6;
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 50; ++i) {
        b.phi_z_upper = 0.01 * i;
        const double l = key_length(b, 2e5, fk, 1e7);
        EXPECT_LE(l, prev);
        prev = l;
    }
    b.phi_z_upper = 0.05;
    SiftedTally t;
    t.n_z = {7'000'000, 3'000'000};
    prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 50; ++i) {
        const auto e = static_cast<std::uint64_t>(1e7 * 0.01 * i);
        t.m_z = {e, 0};
        const double l = key_length(b, ec_leakage(t, b, 1.16, EcMode::kSiftedBlock), fk, 1e7);
        EXPECT_LE(l, prev);
        prev = l;
    }
}

TEST(keyrate, empty_tally_fails) {
    const auto b = decoy_bounds(SiftedTally{}, params());
    EXPECT_TRUE(b.failed);
    FiniteKeyParams fk;
    EXPECT_EQ(analyze_block(SiftedTally{}, SourceConfig{}, fk).key_length_bits, 0.0);
}

TEST(keyrate, rejects_bad_decoy_parameters) {
    auto p = params();
    p.mu2 = 0.6;
    EXPECT_THROW(decoy_bounds(healthy_tally(), p), ContractViolation);
    p = params();
    p.p_mu1 = 1.0;
    EXPECT_THROW(decoy_bounds(healthy_tally(), p), ContractViolation);
}

TEST(keyrate, asymptotic_matches_closed_form) {
    for (double eta : {0.3, 0.05, 0.005}) {
        oracle::YieldModel m{eta, 1e-6, 0.01};
        const double pulses = 1e12;
        const auto t = oracle::expected_tally(m, pulses, 0.5, 0.1, 0.7, 0.03);
        const auto b = decoy_bounds(t, params(Statistics::kAsymptotic));
        const double want = oracle::s1_lower(m, pulses, 0.5, 0.1, 0.7);
        EXPECT_NEAR(b.s_z1_lower / want, 1.0, 1e-6) << eta;
        EXPECT_LE(b.s_z1_lower, oracle::s1_true(m, pulses, 0.5, 0.1, 0.7) * (1 + 1e-9));
        EXPECT_GT(b.s_z1_lower, 0.8 * oracle::s1_true(m, pulses, 0.5, 0.1, 0.7));
        EXPECT_FALSE(b.failed);
        // X-basis single-photon error rate is bounded from above.
        EXPECT_GE(b.phi_z_upper, 0.03 * 0.99);
    }
}

TEST(keyrate, finite_bounds_are_looser_than_asymptotic) {
    const auto t = healthy_tally();
    const auto a = decoy_bounds(t, params(Statistics::kAsymptotic));
    const auto f = decoy_bounds(t, params(Statistics::kFinite));
    EXPECT_LT(f.s_z1_lower, a.s_z1_lower);
    EXPECT_LE(f.s_z0_lower, a.s_z0_lower);
    EXPECT_GT(f.phi_z_upper, a.phi_z_upper);
}

TEST(keyrate, sampling_gamma_degenerate_inputs) {
    EXPECT_EQ(sampling_gamma(1e-9, 0.0, 1e6, 1e6), 0.0);
    EXPECT_EQ(sampling_gamma(1e-9, 0.1, 0.0, 1e6), 0.0);
    EXPECT_GT(sampling_gamma(1e-9, 0.1, 1e6, 1e6), 0.0);
    EXPECT_LT(sampling_gamma(1e-9, 0.1, 1e8, 1e8), sampling_gamma(1e-9, 0.1, 1e6, 1e6));
}

TEST(keyrate, scale_to_block_preserves_ratios) {
    SiftedTally t;
    t.n_z = {700, 300};
    t.n_x = {710, 290};
    t.m_z = {7, 3};
    t.m_x = {21, 9};
    t.elapsed_s = 0.5;
    const auto s = scale_to_block(t, 10'000'000);
    EXPECT_EQ(s.total_n(Basis::kZ), 10'000'000U);
    EXPECT_EQ(s.n_x[0], 7'100'000U);
    EXPECT_EQ(s.m_x[1], 90'000U);
    EXPECT_DOUBLE_EQ(s.elapsed_s, 5000.0);
    EXPECT_THROW(scale_to_block(SiftedTally{}, 10), StatisticError);
}

TEST(keyrate, analyze_block_reports_rate) {
    auto t = healthy_tally();
    SourceConfig src;
    src.mu_decoy = 0.1;
    FiniteKeyParams fk;
    const auto r = analyze_block(t, src, fk);
    EXPECT_GT(r.key_length_bits, 0.0);
    EXPECT_DOUBLE_EQ(r.skr_bps, r.key_length_bits / t.elapsed_s);
    EXPECT_NEAR(r.qber_x, 0.03, 2e-3);
    nlohmann::json j = r;
    EXPECT_EQ(j.at("ec_mode"), "sifted_block");
    EXPECT_EQ(j.at("bound_failure"), false);
}

TEST(keyrate, tally_json_round_trip) {
    const auto t = healthy_tally();
    const nlohmann::json j = t;
    EXPECT_EQ(j.get<SiftedTally>(), t);
    nlohmann::json bad = j;
    bad.erase("m_x");
    EXPECT_THROW(bad.get<SiftedTally>(), DataError);
    bad = j;
    bad["n_z"]["signal"] = -1;
    EXPECT_THROW(bad.get<SiftedTally>(), DataError);
    EXPECT_THROW(nlohmann::json::array().get<SiftedTally>(), DataError);
}
