#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fmx/train.hpp"

namespace fmx::config {

// Loads a JSON config file and applies dotted key=value overrides
// ("training.learning_rate=0.001"); values parse as JSON scalars with a
// string fallback.
nlohmann::json load_config(const std::string& path, const std::vector<std::string>& overrides);
nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& overrides);

// Rejects keys outside the declared schema of each subcommand section.
void check_known_keys(const nlohmann::json& section, const std::vector<std::string>& known,
                      const std::string& where);

train::ExperimentConfig experiment_from_json(const nlohmann::json& j);
nlohmann::json experiment_to_json(const train::ExperimentConfig& cfg);

std::string digest(const nlohmann::json& j);

}  // namespace fmx::config
