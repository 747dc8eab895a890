#pragma once

// Scenario files: YAML documents whose keys carry their units
// (e.g. wavelength_nm, dead_time_ns). Parsing converts to SI internally.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include "fsqkd/channel.hpp"
#include "fsqkd/detection.hpp"
#include "fsqkd/keyrate.hpp"
#include "fsqkd/protocol.hpp"
#include "fsqkd/tracking.hpp"

namespace fsqkd {

struct BudgetSpec {
    double total_loss_db = 0.0;  // mean channel loss including dynamic pointing
    double window_glass_db = 0.0;
    double atmospheric_db = 0.0;
    std::optional<double> geometric_truncation_db;  // empty: computed from the beam
};

struct TurbulenceSpec {
    TurbulenceParams params;
    double analysis_wavelength_m = 1310.10e-9;
    std::optional<double> published_cn2;
    std::optional<double> published_fried_m;
};

struct Scenario {
    std::string name;
    std::uint64_t seed = 1;
    double duration_s = 2.0;
    double dt_s = 1e-3;
    int blocks = 1;
    std::uint64_t min_sifted_z = 0;  // blocks with fewer sifted Z events are re-run longer
    BeamParams beam;
    BudgetSpec budget;
    TurbulenceSpec turbulence;
    SourceConfig source;
    ReceiverConfig receiver;
    LoopConfig tracking;
    FiniteKeyParams finite_key;
    YAML::Node document;  // as parsed, for echoing and overrides

    void validate() const;
};

Scenario parse_scenario(const YAML::Node& doc, std::string_view origin);
Scenario parse_scenario_text(std::string_view text, std::string_view origin);

/// Loads a preset by name (link50, link500) or a scenario file by path.
Scenario load_scenario(std::string_view name_or_path);

std::vector<std::string> preset_names();
std::optional<std::string_view> preset_text(std::string_view name);

/// Replaces the numeric leaf at a dotted path; ConfigError for unknown paths.
YAML::Node with_override(const YAML::Node& doc, std::string_view path, double value);

/// Provenance check: every parameter leaf carries a label in
/// {paper, calibration, convention} and every label names an existing leaf.
std::vector<std::string> lint_scenario(const YAML::Node& doc);

/// Leaf scalars converted to numbers where they parse as numbers.
nlohmann::json yaml_to_json(const YAML::Node& node);

}  // namespace fsqkd
