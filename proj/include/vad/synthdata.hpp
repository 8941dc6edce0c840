#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vad/common.hpp"

namespace vad {

enum class ShapeKind { kSquare, kCircle, kTriangle };
enum class Background { kFlat, kGradient, kTextured };
enum class AnomalyKind { kNovelShape, kFastMotion, kAppearanceMotionMismatch };

const char* to_string(ShapeKind k);
const char* to_string(Background b);
const char* to_string(AnomalyKind a);
ShapeKind shape_kind_from_string(const std::string& s);
Background background_from_string(const std::string& s);
AnomalyKind anomaly_kind_from_string(const std::string& s);

struct SpriteSpec {
  ShapeKind shape = ShapeKind::kSquare;
  int size_px = 8;                       // 6..16 typical; must be >= 4
  float intensity = 0.8f;                // base fill value in [0,1]
  std::array<int, 2> velocity = {0, 0};  // (vx, vy), pixels per frame
  std::array<int, 2> spawn_pos = {0, 0}; // top-left (x, y) at first visible frame
};

// Which velocities each shape is allowed to take in normal footage.
struct VelocityRule {
  ShapeKind shape;
  std::vector<std::array<int, 2>> velocities;
};

struct SceneConfig {
  int frame_h = 128;
  int frame_w = 128;
  int clip_len = 20;
  std::vector<VelocityRule> normal_rules = default_rules();
  std::vector<AnomalyKind> anomaly_kinds = {AnomalyKind::kNovelShape, AnomalyKind::kFastMotion,
                                            AnomalyKind::kAppearanceMotionMismatch};
  std::uint64_t rng_seed = 0;
  Background background = Background::kTextured;

  int sprites_per_sequence = 2;
  int max_speed = 6;           // hard cap on |velocity| components
  int min_sprite_px = 8;
  int max_sprite_px = 14;
  int fast_speed = 6;          // speed used by fast_motion anomalies
  int anomaly_start_frame = -1;  // -1: clip_len / 3
  bool textured_sprites = true;

  static std::vector<VelocityRule> default_rules();
  // Throws ConfigError naming the offending field.
  void validate() const;
  int resolved_anomaly_start() const;
};

struct Box {
  int object_id = 0;
  int x = 0, y = 0, w = 0, h = 0;
  bool is_anomalous = false;
  bool operator==(const Box&) const = default;
};

struct VideoSequence {
  int clip_len = 0, h = 0, w = 0;
  std::vector<float> frames;              // clip_len*h*w, values quantized to k/255
  std::vector<float> gt_flows;            // (clip_len-1)*h*w*2, (u,v) per pixel
  std::vector<std::uint8_t> frame_labels; // 1 = anomalous frame
  std::vector<std::vector<Box>> boxes;    // per frame

  const float* frame(int k) const { return frames.data() + static_cast<std::size_t>(k) * h * w; }
  float* frame(int k) { return frames.data() + static_cast<std::size_t>(k) * h * w; }
  const float* flow(int k) const {
    return gt_flows.data() + static_cast<std::size_t>(k) * h * w * 2;
  }
  float* flow(int k) { return gt_flows.data() + static_cast<std::size_t>(k) * h * w * 2; }

  bool operator==(const VideoSequence&) const = default;
};

// Deterministic function of (config, anomalous). Normal sequences have
// all-false labels; anomalous ones contain at least one anomalous frame.
VideoSequence generate_sequence(const SceneConfig& config, bool anomalous);

// Sprite support mask in local coordinates (size_px x size_px, row-major,
// 1 = covered). Exposed so tests can check flow-warp consistency on sprite
// interiors.
std::vector<std::uint8_t> sprite_mask(ShapeKind shape, int size_px);

// ---- dataset on disk ----
// Directory layout: manifest.json + seq_NNNN.bin + seq_NNNN.boxes.json.

struct DatasetManifest {
  std::uint64_t seed = 0;
  int count = 0;
  std::string config_json;  // serialized SceneConfig (provenance)
  std::vector<std::string> files;
  std::vector<bool> anomalous;
};

DatasetManifest write_dataset(const std::vector<VideoSequence>& sequences,
                              const std::vector<bool>& anomalous, const std::string& dir,
                              std::uint64_t seed, const std::string& config_json);
std::vector<VideoSequence> read_dataset(const std::string& dir, DatasetManifest* manifest = nullptr);

}  // namespace vad
