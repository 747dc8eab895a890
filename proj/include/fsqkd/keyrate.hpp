#pragma once

// One-decoy finite-key analysis for the three-state time-bin protocol.
//
// Bounds follow the standard one-decoy method: Hoeffding-corrected per-intensity
// counts, a vacuum bound from the two-intensity linear combination, the
// single-photon lower bound, and a phase-error upper bound from X-basis
// single-photon errors plus a random-sampling correction. Asymptotic mode sets
// both finite-size corrections to zero.

#include <cstdint>
#include <string_view>

#include <json.hpp>

#include "fsqkd/protocol.hpp"

namespace fsqkd {

enum class EcMode { kSiftedBlock, kPaperLiteral };
enum class Statistics { kFinite, kAsymptotic };

std::string_view to_string(EcMode m) noexcept;
std::string_view to_string(Statistics s) noexcept;
EcMode parse_ec_mode(std::string_view s);

struct FiniteKeyParams {
    double eps_sec = 1e-9;
    double eps_corr = 1e-9;
    double f_eff = 1.16;
    std::uint64_t block_nz = 10'000'000;
    EcMode ec_mode = EcMode::kSiftedBlock;
    Statistics statistics = Statistics::kFinite;

    void validate() const;
};

struct DecoyParams {
    double mu1 = 0.5;
    double mu2 = 0.2;
    double p_mu1 = 0.7;
    double eps = 1e-9;
    Statistics statistics = Statistics::kFinite;

    static DecoyParams from(const SourceConfig& src, const FiniteKeyParams& fk) noexcept;
};

struct DecoyBounds {
    double s_z0_lower = 0.0;
    double s_z0_upper = 0.0;
    double s_z1_lower = 0.0;
    double s_x1_lower = 0.0;
    double v_x1_upper = 0.0;
    double phi_z_upper = 0.5;
    bool failed = true;
};

double binary_entropy(double p);

/// Hoeffding deviation sqrt(n/2 ln(19/eps)).
double hoeffding_delta(double n, double eps) noexcept;

/// Random-sampling correction on the phase-error estimate.
double sampling_gamma(double eps, double rate, double n_z, double n_x) noexcept;

DecoyBounds decoy_bounds(const SiftedTally& tally, const DecoyParams& p);

double ec_leakage(const SiftedTally& tally, const DecoyBounds& bounds, double f_eff, EcMode mode);

/// Constant composable-security penalty 6 log2(19/eps_sec) + log2(2/eps_corr).
double security_penalty(double eps_sec, double eps_corr);

double key_length(const DecoyBounds& bounds, double lambda_ec, const FiniteKeyParams& params,
                  double n_z);

double secure_key_rate(double key_length_bits, double elapsed_s);

/// Rescale a tally to a Z block of `block_nz` sifted events; elapsed scales along.
SiftedTally scale_to_block(const SiftedTally& tally, std::uint64_t block_nz);

struct KeyReport {
    double key_length_bits = 0.0;
    double skr_bps = 0.0;
    double qber_z = 0.0;
    double qber_x = 0.0;
    DecoyBounds bounds;
    double lambda_ec_bits = 0.0;
    double elapsed_s = 0.0;
    FiniteKeyParams params;
    double n_z = 0.0;
};

/// Full analysis of one block. The tally is analysed as given (no rescaling).
KeyReport analyze_block(const SiftedTally& tally, const SourceConfig& src,
                        const FiniteKeyParams& params);

void to_json(nlohmann::json& j, const KeyReport& r);
void to_json(nlohmann::json& j, const SiftedTally& t);
void from_json(const nlohmann::json& j, SiftedTally& t);

}  // namespace fsqkd
