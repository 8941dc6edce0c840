#pragma once

#include <string>

#include <json.hpp>

#include "vad/net.hpp"
#include "vad/objective.hpp"
#include "vad/synthdata.hpp"
#include "vad/trainer.hpp"

namespace vad {

// Everything a run needs, loadable from a JSON file of flat dotted keys
// ("train.lr_init": 2e-4) with CLI --set overrides. The resolved config is
// embedded in every output artifact.
struct RunConfig {
  SceneConfig scene;
  TrainConfig train;  // carries ArchConfig, LossWeights, memory sizes, fusion weights
};

// Nested JSON (used inside checkpoints and manifests).
nlohmann::json to_json(const SceneConfig& c);
nlohmann::json to_json(const ArchConfig& c);
nlohmann::json to_json(const LossWeights& w);
nlohmann::json to_json(const TrainConfig& c);
void from_json_into(const nlohmann::json& j, SceneConfig& c);
void from_json_into(const nlohmann::json& j, ArchConfig& c);
void from_json_into(const nlohmann::json& j, LossWeights& w);
void from_json_into(const nlohmann::json& j, TrainConfig& c);

// Flat dotted-key view of the whole run config.
nlohmann::json to_flat_json(const RunConfig& c);
// Applies one dotted key; throws ConfigError for unknown keys or bad values.
void apply_flat_key(RunConfig& c, const std::string& key, const nlohmann::json& value);
// Parses a whole flat-key object.
RunConfig run_config_from_flat_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
// Applies "key=value" override strings (values parsed as JSON, bare words as strings).
void apply_override(RunConfig& c, const std::string& key_eq_value);

}  // namespace vad
