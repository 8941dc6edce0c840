#include "vad/runconfig.hpp"

#include <fstream>

#include "vad/common.hpp"

using nlohmann::json;

namespace vad {

namespace {

json velocity_rules_to_json(const std::vector<VelocityRule>& rules) {
  json out = json::array();
  for (const auto& r : rules) {
    json vels = json::array();
    for (const auto& v : r.velocities) vels.push_back({v[0], v[1]});
    out.push_back({{"shape", to_string(r.shape)}, {"velocities", std::move(vels)}});
  }
  return out;
}

std::vector<VelocityRule> velocity_rules_from_json(const json& j) {
  std::vector<VelocityRule> out;
  for (const auto& jr : j) {
    VelocityRule r;
    r.shape = shape_kind_from_string(jr.at("shape").get<std::string>());
    for (const auto& jv : jr.at("velocities"))
      r.velocities.push_back({jv.at(0).get<int>(), jv.at(1).get<int>()});
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace

json to_json(const SceneConfig& c) {
  json kinds = json::array();
  for (auto k : c.anomaly_kinds) kinds.push_back(to_string(k));
  return {{"frame_h", c.frame_h},
          {"frame_w", c.frame_w},
          {"clip_len", c.clip_len},
          {"normal_rules", velocity_rules_to_json(c.normal_rules)},
          {"anomaly_kinds", std::move(kinds)},
          {"rng_seed", c.rng_seed},
          {"background", to_string(c.background)},
          {"sprites_per_sequence", c.sprites_per_sequence},
          {"max_speed", c.max_speed},
          {"min_sprite_px", c.min_sprite_px},
          {"max_sprite_px", c.max_sprite_px},
          {"fast_speed", c.fast_speed},
          {"anomaly_start_frame", c.anomaly_start_frame},
          {"textured_sprites", c.textured_sprites}};
}

void from_json_into(const json& j, SceneConfig& c) {
  c.frame_h = j.value("frame_h", c.frame_h);
  c.frame_w = j.value("frame_w", c.frame_w);
  c.clip_len = j.value("clip_len", c.clip_len);
  if (j.contains("normal_rules")) c.normal_rules = velocity_rules_from_json(j["normal_rules"]);
  if (j.contains("anomaly_kinds")) {
    c.anomaly_kinds.clear();
    for (const auto& jk : j["anomaly_kinds"])
      c.anomaly_kinds.push_back(anomaly_kind_from_string(jk.get<std::string>()));
  }
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  if (j.contains("background"))
    c.background = background_from_string(j["background"].get<std::string>());
  c.sprites_per_sequence = j.value("sprites_per_sequence", c.sprites_per_sequence);
  c.max_speed = j.value("max_speed", c.max_speed);
  c.min_sprite_px = j.value("min_sprite_px", c.min_sprite_px);
  c.max_sprite_px = j.value("max_sprite_px", c.max_sprite_px);
  c.fast_speed = j.value("fast_speed", c.fast_speed);
  c.anomaly_start_frame = j.value("anomaly_start_frame", c.anomaly_start_frame);
  c.textured_sprites = j.value("textured_sprites", c.textured_sprites);
}

json to_json(const ArchConfig& c) {
  return {{"levels", c.levels},
          {"channels", c.channels},
          {"kernel", c.kernel},
          {"in_channels_appearance", c.in_channels_appearance},
          {"in_channels_motion", c.in_channels_motion},
          {"out_channels", c.out_channels},
          {"skip_variant", to_string(c.skip_variant)},
          {"mgsm_enabled", c.mgsm_enabled},
          {"ffrp_enabled", c.ffrp_enabled},
          {"align_enabled", c.align_enabled},
          {"appearance_enabled", c.appearance_enabled},
          {"motion_enabled", c.motion_enabled},
          {"input_size", c.input_size},
          {"final_activation", to_string(c.final_activation)}};
}

void from_json_into(const json& j, ArchConfig& c) {
  c.levels = j.value("levels", c.levels);
  if (j.contains("channels")) c.channels = j["channels"].get<std::vector<int>>();
  c.kernel = j.value("kernel", c.kernel);
  c.in_channels_appearance = j.value("in_channels_appearance", c.in_channels_appearance);
  c.in_channels_motion = j.value("in_channels_motion", c.in_channels_motion);
  c.out_channels = j.value("out_channels", c.out_channels);
  if (j.contains("skip_variant"))
    c.skip_variant = skip_variant_from_string(j["skip_variant"].get<std::string>());
  c.mgsm_enabled = j.value("mgsm_enabled", c.mgsm_enabled);
  c.ffrp_enabled = j.value("ffrp_enabled", c.ffrp_enabled);
  c.align_enabled = j.value("align_enabled", c.align_enabled);
  c.appearance_enabled = j.value("appearance_enabled", c.appearance_enabled);
  c.motion_enabled = j.value("motion_enabled", c.motion_enabled);
  c.input_size = j.value("input_size", c.input_size);
  if (j.contains("final_activation"))
    c.final_activation = final_activation_from_string(j["final_activation"].get<std::string>());
}

json to_json(const LossWeights& w) {
  return {{"intensity", w.intensity},   {"gradient", w.gradient},
          {"align", w.align},           {"compact", w.compact},
          {"diversity", w.diversity},   {"weight_decay", w.weight_decay},
          {"diversity_margin", w.diversity_margin}};
}

void from_json_into(const json& j, LossWeights& w) {
  w.intensity = j.value("intensity", w.intensity);
  w.gradient = j.value("gradient", w.gradient);
  w.align = j.value("align", w.align);
  w.compact = j.value("compact", w.compact);
  w.diversity = j.value("diversity", w.diversity);
  w.weight_decay = j.value("weight_decay", w.weight_decay);
  w.diversity_margin = j.value("diversity_margin", w.diversity_margin);
}

json to_json(const TrainConfig& c) {
  return {{"arch", to_json(c.arch)},
          {"memory_sizes", c.memory_sizes},
          {"weights", to_json(c.weights)},
          {"lr_init", c.lr_init},
          {"lr_decay", c.lr_decay},
          {"lr_decay_every_epochs", c.lr_decay_every_epochs},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"score_w_p", c.score_w_p},
          {"score_w_f", c.score_w_f}};
}

void from_json_into(const json& j, TrainConfig& c) {
  if (j.contains("arch")) from_json_into(j["arch"], c.arch);
  if (j.contains("memory_sizes")) c.memory_sizes = j["memory_sizes"].get<std::vector<int>>();
  if (j.contains("weights")) from_json_into(j["weights"], c.weights);
  c.lr_init = j.value("lr_init", c.lr_init);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.lr_decay_every_epochs = j.value("lr_decay_every_epochs", c.lr_decay_every_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.score_w_p = j.value("score_w_p", c.score_w_p);
  c.score_w_f = j.value("score_w_f", c.score_w_f);
}

// ---------------------------------------------------------------------------
// flat dotted-key view
// ---------------------------------------------------------------------------

namespace {

void flatten_into(const std::string& prefix, const json& j, json& out) {
  for (const auto& [key, value] : j.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (value.is_object())
      flatten_into(path, value, out);
    else
      out[path] = value;
  }
}

// Routes "a.b.c" back into a nested object.
void unflatten_into(json& nested, const std::string& key, const json& value) {
  json* cur = &nested;
  std::size_t pos = 0;
  while (true) {
    const std::size_t dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    cur = &(*cur)[part];
    pos = dot + 1;
  }
}

}  // namespace

json to_flat_json(const RunConfig& c) {
  json nested = {{"scene", to_json(c.scene)}, {"train", to_json(c.train)}};
  json flat = json::object();
  flatten_into("", nested, flat);
  return flat;
}

void apply_flat_key(RunConfig& c, const std::string& key, const json& value) {
  // Validate the key against the known flat schema, then rebuild through the
  // nested parsers so type errors surface with the field name.
  const json known = to_flat_json(c);
  if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
  json nested = {{"scene", to_json(c.scene)}, {"train", to_json(c.train)}};
  unflatten_into(nested, key, value);
  try {
    from_json_into(nested.at("scene"), c.scene);
    from_json_into(nested.at("train"), c.train);
  } catch (const json::exception& e) {
    throw ConfigError("bad value for config key '" + key + "': " + e.what());
  }
}

RunConfig run_config_from_flat_json(const json& j) {
  RunConfig c;
  if (!j.is_object()) throw ConfigError("config file must contain a JSON object");
  for (const auto& [key, value] : j.items()) apply_flat_key(c, key, value);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("invalid JSON in " + path + ": " + e.what());
  }
  return run_config_from_flat_json(j);
}

void apply_override(RunConfig& c, const std::string& key_eq_value) {
  const std::size_t eq = key_eq_value.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key=value, got '" + key_eq_value + "'");
  const std::string key = key_eq_value.substr(0, eq);
  const std::string raw = key_eq_value.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // bare words are strings
  }
  apply_flat_key(c, key, value);
}

}  // namespace vad
