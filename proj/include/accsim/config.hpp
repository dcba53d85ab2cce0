#pragma once

#include <string>

#include <json.hpp>

#include "accsim/sim.hpp"

namespace accsim {

struct OutputConfig {
    std::string trace = "trace.csv";
    std::string metrics = "metrics.json";
    std::string model = "model.json";
};

// A scenario document: a preset name plus any number of field overrides.
struct ScenarioFile {
    std::string preset = "nominal";
    SimConfig sim;
    OutputConfig output;
};

// The named parameter sets; unknown names are a ConfigError.
ScenarioFile preset_scenario(const std::string& name);
const std::vector<std::string>& preset_names();

// Strict parsing: unknown keys anywhere in the document are rejected. The
// preset (default "nominal") is applied first, explicit keys override it.
ScenarioFile parse_scenario_json(const nlohmann::json& doc);
ScenarioFile load_scenario_file(const std::string& path);

// Fully resolved document; parse(serialize(s)) == s.
nlohmann::json scenario_to_json(const ScenarioFile& scenario);

// Numeric-field access for sweeps; unknown names are a ConfigError.
void set_numeric_field(SimConfig& config, const std::string& name, double value);
const std::vector<std::string>& sweepable_fields();

}  // namespace accsim
