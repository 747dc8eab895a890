#include "fsqkd/keyrate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fsqkd/errors.hpp"

namespace fsqkd {

namespace {

constexpr double kHoeffdingFactor = 19.0;

double poisson_weight(const DecoyParams& p, int n) noexcept {
    // tau_n = sum_k p_k e^{-mu_k} mu_k^n / n!
    const double f = std::tgamma(n + 1.0);
    return p.p_mu1 * std::exp(-p.mu1) * std::pow(p.mu1, n) / f +
           (1.0 - p.p_mu1) * std::exp(-p.mu2) * std::pow(p.mu2, n) / f;
}

struct BasisBounds {
    double s0_lower = 0.0;
    double s0_upper = 0.0;
    double s1_lower = 0.0;
};

// Vacuum and single-photon bounds in one basis from per-intensity counts.
BasisBounds basis_bounds(const std::array<std::uint64_t, kIntensityCount>& n,
                         const std::array<std::uint64_t, kIntensityCount>& m, const DecoyParams& p,
                         double delta) {
    const double mu1 = p.mu1;
    const double mu2 = p.mu2;
    const double p1 = p.p_mu1;
    const double p2 = 1.0 - p.p_mu1;
    const double n1_hi = std::exp(mu1) / p1 * (static_cast<double>(n[0]) + delta);
    const double n2_lo = std::exp(mu2) / p2 * (static_cast<double>(n[1]) - delta);
    const double m2_hi = std::exp(mu2) / p2 * (static_cast<double>(m[1]) + delta);
    const double tau0 = poisson_weight(p, 0);
    const double tau1 = poisson_weight(p, 1);
    const double total = static_cast<double>(n[0] + n[1]);

    BasisBounds b;
    b.s0_lower = std::clamp(tau0 / (mu1 - mu2) * (mu1 * n2_lo - mu2 * n1_hi), 0.0, total);
    b.s0_upper = std::clamp(2.0 * (tau0 * m2_hi + delta), 0.0, total);
    const double s1 = tau1 * mu1 / (mu2 * (mu1 - mu2)) *
                      (n2_lo - (mu2 * mu2) / (mu1 * mu1) * n1_hi -
                       (mu1 * mu1 - mu2 * mu2) / (mu1 * mu1) * b.s0_upper / tau0);
    b.s1_lower = std::clamp(s1, 0.0, total - b.s0_lower);
    return b;
}

}  // namespace

std::string_view to_string(EcMode m) noexcept {
    return m == EcMode::kSiftedBlock ? "sifted_block" : "paper_literal";
}

std::string_view to_string(Statistics s) noexcept {
    return s == Statistics::kFinite ? "finite" : "asymptotic";
}

EcMode parse_ec_mode(std::string_view s) {
    if (s == "sifted_block") return EcMode::kSiftedBlock;
    if (s == "paper_literal") return EcMode::kPaperLiteral;
    throw ConfigError("unknown error-correction mode '" + std::string(s) + "'");
}

void FiniteKeyParams::validate() const {
    if (!(eps_sec > 0.0 && eps_sec < 1.0)) throw ConfigError("finite_key: eps_sec must be in (0, 1)");
    if (!(eps_corr > 0.0 && eps_corr < 1.0)) throw ConfigError("finite_key: eps_corr must be in (0, 1)");
    if (!(f_eff >= 1.0)) throw ConfigError("finite_key: f_eff must be >= 1");
    if (block_nz < 1) throw ConfigError("finite_key: block_nz must be >= 1");
}

DecoyParams DecoyParams::from(const SourceConfig& src, const FiniteKeyParams& fk) noexcept {
    return {src.mu_signal, src.mu_decoy, src.p_signal, fk.eps_sec, fk.statistics};
}

double binary_entropy(double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw ContractViolation("binary_entropy: p outside [0, 1]");
    if (p == 0.0 || p == 1.0) return 0.0;
    return -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
}

double hoeffding_delta(double n, double eps) noexcept {
    return std::sqrt(n / 2.0 * std::log(kHoeffdingFactor / eps));
}

double sampling_gamma(double eps, double rate, double n_z, double n_x) noexcept {
    if (!(rate > 0.0 && rate < 1.0) || !(n_z > 0.0) || !(n_x > 0.0)) return 0.0;
    const double x = (1.0 - rate) * rate;
    const double arg = (n_z + n_x) / (n_z * n_x * x) * (kHoeffdingFactor * kHoeffdingFactor) / (eps * eps);
    const double lg = std::log2(arg);
    if (!(lg > 0.0)) return 0.0;
    return std::sqrt((n_z + n_x) * x / (n_z * n_x * std::log(2.0)) * lg);
}

DecoyBounds decoy_bounds(const SiftedTally& tally, const DecoyParams& p) {
    if (!(p.mu1 > p.mu2 && p.mu2 > 0.0)) throw ContractViolation("decoy_bounds: require mu1 > mu2 > 0");
    if (!(p.p_mu1 > 0.0 && p.p_mu1 < 1.0)) throw ContractViolation("decoy_bounds: p_mu1 outside (0, 1)");
    if (!(p.eps > 0.0 && p.eps < 1.0)) throw ContractViolation("decoy_bounds: eps outside (0, 1)");

    DecoyBounds out;
    const double nz = static_cast<double>(tally.total_n(Basis::kZ));
    const double nx = static_cast<double>(tally.total_n(Basis::kX));
    if (nz == 0.0 || nx == 0.0) {
        out.s_z0_lower = out.s_z0_upper = out.s_z1_lower = 0.0;
        return out;
    }
    const bool finite = p.statistics == Statistics::kFinite;
    const double dz = finite ? hoeffding_delta(nz, p.eps) : 0.0;
    const double dx = finite ? hoeffding_delta(nx, p.eps) : 0.0;

    const BasisBounds z = basis_bounds(tally.n_z, tally.m_z, p, dz);
    const BasisBounds x = basis_bounds(tally.n_x, tally.m_x, p, dx);
    out.s_z0_lower = z.s0_lower;
    out.s_z0_upper = z.s0_upper;
    out.s_z1_lower = z.s1_lower;
    out.s_x1_lower = x.s1_lower;

    const double tau1 = poisson_weight(p, 1);
    const double m1_hi = std::exp(p.mu1) / p.p_mu1 * (static_cast<double>(tally.m_x[0]) + dx);
    const double m2_lo = std::exp(p.mu2) / (1.0 - p.p_mu1) * (static_cast<double>(tally.m_x[1]) - dx);
    out.v_x1_upper = std::clamp(tau1 / (p.mu1 - p.mu2) * (m1_hi - m2_lo), 0.0, nx);

    if (!(out.s_z1_lower > 0.0) || !(out.s_x1_lower > 0.0)) {
        out.phi_z_upper = 0.5;
        out.failed = true;
        return out;
    }
    const double ratio = out.v_x1_upper / out.s_x1_lower;
    const double gamma = finite ? sampling_gamma(p.eps, ratio, out.s_z1_lower, out.s_x1_lower) : 0.0;
    out.phi_z_upper = std::clamp(ratio + gamma, 0.0, 0.5);
    out.failed = !(out.phi_z_upper < 0.5);
    return out;
}

double ec_leakage(const SiftedTally& tally, const DecoyBounds& bounds, double f_eff, EcMode mode) {
    if (!(f_eff >= 1.0)) throw ContractViolation("ec_leakage: f_eff must be >= 1");
    const double nz = static_cast<double>(tally.total_n(Basis::kZ));
    if (nz == 0.0) return 0.0;
    const double h = binary_entropy(static_cast<double>(tally.total_m(Basis::kZ)) / nz);
    const double n = mode == EcMode::kSiftedBlock ? nz : bounds.s_z1_lower;
    return n * f_eff * h;
}

double security_penalty(double eps_sec, double eps_corr) {
    return 6.0 * std::log2(kHoeffdingFactor / eps_sec) + std::log2(2.0 / eps_corr);
}

double key_length(const DecoyBounds& bounds, double lambda_ec, const FiniteKeyParams& params,
                  double n_z) {
    if (bounds.failed) return 0.0;
    const double l = bounds.s_z0_lower +
                     bounds.s_z1_lower * (1.0 - binary_entropy(bounds.phi_z_upper)) - lambda_ec -
                     security_penalty(params.eps_sec, params.eps_corr);
    return std::clamp(std::floor(l), 0.0, std::max(n_z, 0.0));
}

double secure_key_rate(double key_length_bits, double elapsed_s) {
    if (!(elapsed_s > 0.0)) throw ContractViolation("secure_key_rate: elapsed must be positive");
    return key_length_bits / elapsed_s;
}

SiftedTally scale_to_block(const SiftedTally& tally, std::uint64_t block_nz) {
    const auto nz = tally.total_n(Basis::kZ);
    if (nz == 0) throw StatisticError("no sifted Z events to scale to a block");
    const double f = static_cast<double>(block_nz) / static_cast<double>(nz);
    auto scale = [f](std::uint64_t v) {
        return static_cast<std::uint64_t>(std::llround(static_cast<double>(v) * f));
    };
    SiftedTally out;
    for (int k = 0; k < kIntensityCount; ++k) {
        out.n_z[k] = scale(tally.n_z[k]);
        out.n_x[k] = scale(tally.n_x[k]);
        out.m_z[k] = scale(tally.m_z[k]);
        out.m_x[k] = scale(tally.m_x[k]);
    }
    out.elapsed_s = tally.elapsed_s * f;
    return out;
}

KeyReport analyze_block(const SiftedTally& tally, const SourceConfig& src,
                        const FiniteKeyParams& params) {
    params.validate();
    KeyReport r;
    r.params = params;
    r.elapsed_s = tally.elapsed_s;
    r.n_z = static_cast<double>(tally.total_n(Basis::kZ));
    const double nx = static_cast<double>(tally.total_n(Basis::kX));
    r.qber_z = r.n_z > 0.0 ? static_cast<double>(tally.total_m(Basis::kZ)) / r.n_z : 0.0;
    r.qber_x = nx > 0.0 ? static_cast<double>(tally.total_m(Basis::kX)) / nx : 0.0;
    r.bounds = decoy_bounds(tally, DecoyParams::from(src, params));
    r.lambda_ec_bits = ec_leakage(tally, r.bounds, params.f_eff, params.ec_mode);
    r.key_length_bits = key_length(r.bounds, r.lambda_ec_bits, params, r.n_z);
    r.skr_bps = r.elapsed_s > 0.0 ? secure_key_rate(r.key_length_bits, r.elapsed_s) : 0.0;
    return r;
}

void to_json(nlohmann::json& j, const KeyReport& r) {
    j = nlohmann::json{
        {"key_length_bits", r.key_length_bits},
        {"skr_bps", r.skr_bps},
        {"qber_z", r.qber_z},
        {"qber_x", r.qber_x},
        {"n_z", r.n_z},
        {"s_z0_lower", r.bounds.s_z0_lower},
        {"s_z1_lower", r.bounds.s_z1_lower},
        {"s_x1_lower", r.bounds.s_x1_lower},
        {"v_x1_upper", r.bounds.v_x1_upper},
        {"phi_z_upper", r.bounds.phi_z_upper},
        {"lambda_ec_bits", r.lambda_ec_bits},
        {"elapsed_s", r.elapsed_s},
        {"epsilon_sec", r.params.eps_sec},
        {"epsilon_corr", r.params.eps_corr},
        {"f_eff", r.params.f_eff},
        {"ec_mode", to_string(r.params.ec_mode)},
        {"statistics", to_string(r.params.statistics)},
        {"bound_failure", r.bounds.failed},
    };
}

namespace {

nlohmann::json per_intensity(const std::array<std::uint64_t, kIntensityCount>& v) {
    return {{"signal", v[0]}, {"decoy", v[1]}};
}

std::array<std::uint64_t, kIntensityCount> per_intensity(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw DataError(std::string("tally: missing field '") + key + "'");
    const auto& o = j.at(key);
    for (const char* k : {"signal", "decoy"}) {
        if (!o.is_object() || !o.contains(k) || !o.at(k).is_number_unsigned()) {
            throw DataError(std::string("tally: field '") + key + "." + k +
                            "' must be a non-negative integer");
        }
    }
    try {
        return {o.at("signal").get<std::uint64_t>(), o.at("decoy").get<std::uint64_t>()};
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("tally: field '") + key + "': " + e.what());
    }
}

}  // namespace

void to_json(nlohmann::json& j, const SiftedTally& t) {
    j = nlohmann::json{{"n_z", per_intensity(t.n_z)},
                       {"n_x", per_intensity(t.n_x)},
                       {"m_z", per_intensity(t.m_z)},
                       {"m_x", per_intensity(t.m_x)},
                       {"elapsed_s", t.elapsed_s}};
}

void from_json(const nlohmann::json& j, SiftedTally& t) {
    if (!j.is_object()) throw DataError("tally: expected a JSON object");
    t.n_z = per_intensity(j, "n_z");
    t.n_x = per_intensity(j, "n_x");
    t.m_z = per_intensity(j, "m_z");
    t.m_x = per_intensity(j, "m_x");
    if (!j.contains("elapsed_s") || !j.at("elapsed_s").is_number()) {
        throw DataError("tally: missing numeric field 'elapsed_s'");
    }
    t.elapsed_s = j.at("elapsed_s").get<double>();
    for (int k = 0; k < kIntensityCount; ++k) {
        if (t.m_z[k] > t.n_z[k] || t.m_x[k] > t.n_x[k]) {
            throw DataError("tally: error count exceeds detection count");
        }
    }
}

}  // namespace fsqkd
