#include "fsqkd/scenario.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include "fsqkd/errors.hpp"
#include "presets.inc"

namespace fsqkd {

namespace {

bool parse_double(std::string_view s, double& out) {
    if (s == "inf" || s == ".inf" || s == "+inf") {
        out = std::numeric_limits<double>::infinity();
        return true;
    }
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc() && ptr == end;
}

class Section {
public:
    Section(YAML::Node node, std::string path)
        : node_(std::move(node)), path_(std::move(path)), present_(node_.IsDefined() && !node_.IsNull()) {
        if (present_ && !node_.IsMap()) throw ConfigError(where() + "expected a mapping");
    }

    bool has(const char* key) const { return present_ && get(key).IsDefined(); }

    double number(const char* key) {
        if (!has(key)) throw ConfigError(where() + "missing required key '" + key + "'");
        return read(key);
    }

    double number(const char* key, double fallback) { return has(key) ? read(key) : fallback; }

    std::string text(const char* key, const std::string& fallback) {
        if (!has(key)) return fallback;
        seen_.insert(key);
        const YAML::Node v = get(key);
        if (!v.IsScalar()) throw ConfigError(where() + "'" + key + "' must be a scalar");
        return v.Scalar();
    }

    std::uint64_t count(const char* key, std::uint64_t fallback) {
        if (!has(key)) return fallback;
        const double v = read(key);
        if (!(v >= 0.0 && v < 1.8e19) || std::floor(v) != v) {
            throw ConfigError(where() + "'" + key + "' must be a non-negative integer");
        }
        return static_cast<std::uint64_t>(v);
    }

    Section child(const char* key) {
        seen_.insert(key);
        if (!has(key)) return Section(YAML::Node(), qualified(key));
        return Section(get(key), qualified(key));
    }

    void mark(const char* key) { seen_.insert(key); }

    void finish() const {
        if (!present_) return;
        for (const auto& kv : node_) {
            const auto key = kv.first.as<std::string>();
            if (!seen_.count(key)) throw ConfigError(where() + "unknown key '" + key + "'");
        }
    }

private:
    double read(const char* key) {
        seen_.insert(key);
        const YAML::Node v = get(key);
        double out = 0.0;
        if (!v.IsScalar() || !parse_double(v.Scalar(), out)) {
            throw ConfigError(where() + "'" + key + "' must be a number");
        }
        return out;
    }

    const YAML::Node get(const char* key) const { return std::as_const(node_)[key]; }

    std::string qualified(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
    std::string where() const { return "scenario " + (path_.empty() ? std::string("root") : path_) + ": "; }

    YAML::Node node_;
    std::string path_;
    bool present_;
    std::set<std::string> seen_;
};

void collect_leaves(const YAML::Node& node, const std::string& prefix, std::vector<std::string>& out) {
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        const std::string path = prefix.empty() ? key : prefix + "." + key;
        if (prefix.empty() && (key == "name" || key == "provenance")) continue;
        if (kv.second.IsMap()) {
            collect_leaves(kv.second, path, out);
        } else {
            out.push_back(path);
        }
    }
}

std::vector<std::string> split_path(std::string_view path) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= path.size()) {
        const auto dot = path.find('.', start);
        const auto end = dot == std::string_view::npos ? path.size() : dot;
        parts.emplace_back(path.substr(start, end - start));
        if (dot == std::string_view::npos) break;
        start = dot + 1;
    }
    return parts;
}

}  // namespace

void Scenario::validate() const {
    if (name.empty()) throw ConfigError("scenario: name must not be empty");
    if (!(duration_s > 0.0)) throw ConfigError("scenario: duration_s must be positive");
    if (!(dt_s > 0.0) || dt_s > duration_s) throw ConfigError("scenario: dt must be positive and <= duration");
    if (blocks < 1) throw ConfigError("scenario: blocks must be >= 1");
    beam.validate();
    for (double v : {budget.total_loss_db, budget.window_glass_db, budget.atmospheric_db}) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("budget: losses must be finite and >= 0 dB");
    }
    if (budget.geometric_truncation_db && !(*budget.geometric_truncation_db >= 0.0)) {
        throw ConfigError("budget: geometric_truncation_db must be >= 0");
    }
    turbulence.params.validate();
    if (!(turbulence.analysis_wavelength_m > 0.0)) throw ConfigError("turbulence: analysis wavelength must be positive");
    source.validate();
    receiver.validate(source);
    if (!(tracking.mode_radius_m > 0.0)) throw ConfigError("tracking: mode radius must be positive");
    if (!(tracking.mirror.time_constant_s > 0.0)) throw ConfigError("tracking: mirror time constant must be positive");
    if (!(tracking.mirror.slew_rate_m_per_s > 0.0)) throw ConfigError("tracking: mirror slew limit must be positive");
    if (!(tracking.fqd.resolution_m > 0.0) || !(tracking.fqd.range_m > 0.0) || !(tracking.fqd.read_noise_m >= 0.0)) {
        throw ConfigError("tracking: invalid four-quadrant detector parameters");
    }
    if (!tracking.gains.finite()) throw ConfigError("tracking: PID gains must be finite");
    finite_key.validate();
}

Scenario parse_scenario(const YAML::Node& doc, std::string_view origin) {
    if (!doc || !doc.IsMap()) throw ConfigError(std::string(origin) + ": scenario must be a YAML mapping");
    Scenario s;
    s.document = YAML::Clone(doc);
    try {
        Section root(doc, "");
        s.name = root.text("name", "");
        s.seed = root.count("seed", 1);
        s.duration_s = root.number("duration_s", 2.0);
        s.dt_s = root.number("dt_ms", 1.0) * 1e-3;
        s.blocks = static_cast<int>(root.count("blocks", 1));
        s.min_sifted_z = root.count("min_sifted_z", 0);
        root.mark("provenance");

        Section beam = root.child("beam");
        s.beam.waist_radius_m = beam.number("waist_radius_mm") * 1e-3;
        s.beam.wavelength_m = beam.number("wavelength_nm") * 1e-9;
        s.beam.link_length_m = beam.number("link_length_m");
        s.beam.aperture_diameter_m = beam.number("aperture_diameter_mm") * 1e-3;
        beam.finish();

        Section budget = root.child("budget");
        s.budget.total_loss_db = budget.number("total_loss_db");
        s.budget.window_glass_db = budget.number("window_glass_db", 0.0);
        s.budget.atmospheric_db = budget.number("atmospheric_db", 0.0);
        if (budget.text("geometric_truncation_db", "auto") != "auto") {
            s.budget.geometric_truncation_db = budget.number("geometric_truncation_db");
        }
        budget.finish();

        Section turb = root.child("turbulence");
        TurbulenceParams& tp = s.turbulence.params;
        tp.target_scintillation = turb.number("scintillation_index");
        tp.scintillation_corr_time_s = turb.number("scintillation_corr_time_ms", 10.0) * 1e-3;
        tp.wander_std_m = turb.number("wander_std_um", 0.0) * 1e-6;
        tp.wander_aspect = turb.number("wander_aspect", 1.0);
        tp.wander_corr_time_s = turb.number("wander_corr_time_ms", 3.0) * 1e-3;
        s.turbulence.analysis_wavelength_m = turb.number("analysis_wavelength_nm", 1310.10) * 1e-9;
        if (turb.has("published_cn2")) s.turbulence.published_cn2 = turb.number("published_cn2");
        if (turb.has("published_fried_parameter_m")) {
            s.turbulence.published_fried_m = turb.number("published_fried_parameter_m");
        }
        turb.finish();

        Section src = root.child("source");
        s.source.rate_hz = src.number("rate_mhz") * 1e6;
        s.source.bin_delay_s = src.number("bin_delay_ps") * 1e-12;
        s.source.mu_signal = src.number("mu_signal");
        s.source.mu_decoy = src.number("mu_decoy");
        s.source.p_z = src.number("p_z");
        s.source.p_signal = src.number("p_signal");
        s.source.bin_crosstalk = src.number("bin_crosstalk", 0.0);
        src.finish();

        Section rx = root.child("receiver");
        s.receiver.insertion_loss_db = rx.number("insertion_loss_db", 0.0);
        s.receiver.z_split = rx.number("z_split", 0.5);
        s.receiver.gate_halfwidth_s = rx.number("gate_halfwidth_ps", 200.0) * 1e-12;
        rx.finish();

        Section det = root.child("detectors");
        DetectorConfig d;
        d.efficiency = det.number("efficiency");
        d.dark_rate_hz = det.number("dark_rate_hz");
        d.dead_time_s = det.number("dead_time_ns") * 1e-9;
        d.jitter_std_s = det.number("jitter_ps") * 1e-12;
        det.finish();
        s.receiver.detectors.fill(d);

        Section imzi = root.child("imzi");
        s.receiver.imzi.delay_s = imzi.number("delay_ps") * 1e-12;
        s.receiver.imzi.intrinsic_visibility = imzi.number("visibility");
        s.receiver.imzi.phase_rad = imzi.number("phase_rad", 0.0);
        s.receiver.imzi.insertion_loss_db = imzi.number("insertion_loss_db", 0.0);
        s.receiver.imzi.drift_rad_per_s = imzi.number("drift_rad_per_s", 0.0);
        imzi.finish();

        Section trk = root.child("tracking");
        const std::string mode = trk.text("mode", "closed");
        if (mode == "closed") {
            s.tracking.mode = LoopMode::kClosed;
        } else if (mode == "open") {
            s.tracking.mode = LoopMode::kOpen;
        } else {
            throw ConfigError("scenario tracking: mode must be open or closed");
        }
        s.tracking.gains = PidGains::uniform(trk.number("kp", 0.0), trk.number("ki", 0.0), trk.number("kd", 0.0));
        const std::string deriv = trk.text("derivative", "literal");
        if (deriv == "literal") {
            s.tracking.derivative = DerivativeMode::kLiteral;
        } else if (deriv == "difference") {
            s.tracking.derivative = DerivativeMode::kDifference;
        } else {
            throw ConfigError("scenario tracking: derivative must be literal or difference");
        }
        s.tracking.mirror.time_constant_s = trk.number("mirror_time_constant_ms", 5.0) * 1e-3;
        s.tracking.mirror.slew_rate_m_per_s =
            trk.number("mirror_slew_um_per_ms", std::numeric_limits<double>::infinity()) * 1e-3;
        s.tracking.fqd.resolution_m = trk.number("fqd_resolution_um", 0.75) * 1e-6;
        s.tracking.fqd.range_m = trk.number("fqd_range_mm", 3.05) * 1e-3;
        s.tracking.fqd.read_noise_m = trk.number("fqd_read_noise_um", 0.0) * 1e-6;
        const std::string quantize = trk.text("fqd_quantize", "true");
        if (quantize != "true" && quantize != "false") {
            throw ConfigError("scenario tracking: fqd_quantize must be true or false");
        }
        s.tracking.fqd.quantize = quantize == "true";
        s.tracking.mode_radius_m = trk.number("mode_radius_um", 150.0) * 1e-6;
        trk.finish();

        Section fk = root.child("finite_key");
        s.finite_key.eps_sec = fk.number("eps_sec", 1e-9);
        s.finite_key.eps_corr = fk.number("eps_corr", 1e-9);
        s.finite_key.f_eff = fk.number("f_eff", 1.16);
        s.finite_key.block_nz = fk.count("block_nz", 10'000'000);
        s.finite_key.ec_mode = parse_ec_mode(fk.text("ec_mode", "sifted_block"));
        const std::string stats = fk.text("statistics", "finite");
        if (stats == "finite") {
            s.finite_key.statistics = Statistics::kFinite;
        } else if (stats == "asymptotic") {
            s.finite_key.statistics = Statistics::kAsymptotic;
        } else {
            throw ConfigError("scenario finite_key: statistics must be finite or asymptotic");
        }
        fk.finish();

        root.finish();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(origin) + ": " + e.what());
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string(origin) + ": " + e.what());
    }
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string(origin) + ": " + e.what());
    }
    return s;
}

Scenario parse_scenario_text(std::string_view text, std::string_view origin) {
    YAML::Node doc;
    try {
        doc = YAML::Load(std::string(text));
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string(origin) + ": " + e.what());
    }
    return parse_scenario(doc, origin);
}

std::vector<std::string> preset_names() {
    std::vector<std::string> out;
    for (const auto& p : kPresets) out.emplace_back(p.name);
    return out;
}

std::optional<std::string_view> preset_text(std::string_view name) {
    for (const auto& p : kPresets) {
        if (p.name == name) return p.text;
    }
    return std::nullopt;
}

Scenario load_scenario(std::string_view name_or_path) {
    if (auto text = preset_text(name_or_path)) {
        return parse_scenario_text(*text, "preset " + std::string(name_or_path));
    }
    std::ifstream in{std::string(name_or_path)};
    if (!in) throw ConfigError("cannot open scenario '" + std::string(name_or_path) + "' (not a preset or readable file)");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_scenario_text(buf.str(), name_or_path);
}

YAML::Node with_override(const YAML::Node& doc, std::string_view path, double value) {
    YAML::Node out = YAML::Clone(doc);
    const auto parts = split_path(path);
    if (parts.empty() || parts.front() == "provenance" || parts.front() == "name") {
        throw ConfigError("unknown parameter path '" + std::string(path) + "'");
    }
    std::vector<YAML::Node> chain{out};
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const YAML::Node& cur = chain.back();
        if (!cur.IsMap() || !cur[parts[i]]) {
            throw ConfigError("unknown parameter path '" + std::string(path) + "'");
        }
        chain.push_back(cur[parts[i]]);
    }
    YAML::Node leaf = chain.back();
    double current = 0.0;
    if (!leaf.IsScalar() || !(parse_double(leaf.Scalar(), current) || leaf.Scalar() == "auto")) {
        throw ConfigError("parameter '" + std::string(path) + "' is not numeric");
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    leaf = std::string(buf);
    return out;
}

std::vector<std::string> lint_scenario(const YAML::Node& doc) {
    std::vector<std::string> issues;
    if (!doc || !doc.IsMap()) return {"scenario is not a mapping"};
    std::vector<std::string> leaves;
    collect_leaves(doc, "", leaves);
    const YAML::Node prov = doc["provenance"];
    if (!prov || !prov.IsMap()) return {"missing provenance section"};
    static const std::set<std::string> kLabels{"paper", "calibration", "convention"};
    const std::set<std::string> leaf_set(leaves.begin(), leaves.end());
    for (const auto& kv : prov) {
        const auto key = kv.first.as<std::string>();
        const auto label = kv.second.IsScalar() ? kv.second.Scalar() : std::string();
        if (!leaf_set.count(key)) issues.push_back("provenance label for unknown key '" + key + "'");
        if (!kLabels.count(label)) issues.push_back("key '" + key + "' has invalid label '" + label + "'");
    }
    for (const auto& leaf : leaves) {
        if (!prov[leaf]) issues.push_back("key '" + leaf + "' has no provenance label");
    }
    return issues;
}

nlohmann::json yaml_to_json(const YAML::Node& node) {
    switch (node.Type()) {
        case YAML::NodeType::Map: {
            nlohmann::json j = nlohmann::json::object();
            for (const auto& kv : node) j[kv.first.as<std::string>()] = yaml_to_json(kv.second);
            return j;
        }
        case YAML::NodeType::Sequence: {
            nlohmann::json j = nlohmann::json::array();
            for (const auto& v : node) j.push_back(yaml_to_json(v));
            return j;
        }
        case YAML::NodeType::Scalar: {
            const std::string& s = node.Scalar();
            double v = 0.0;
            if (s != "inf" && parse_double(s, v)) return v;
            if (s == "true") return true;
            if (s == "false") return false;
            return s;
        }
        default:
            return nullptr;
    }
}

}  // namespace fsqkd
