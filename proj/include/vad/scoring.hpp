#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vad/tensor.hpp"

namespace vad {

// Anomaly scoring: per-STC prediction error S_p and appearance-motion feature
// inconsistency S_f, fused as a weighted sum of z-scores against the normal
// training statistics; per-frame scores are the max over objects.

struct ScoreStats {
  float u_p = 0.f, d_p = 1.f;  // mean / stddev of S_p on normal training data
  float u_f = 0.f, d_f = 1.f;  // mean / stddev of S_f
  float fused_min = 0.f;       // smallest fused training score (floor reference)
  bool fitted = false;
};

constexpr float kStdFloor = 1e-8f;

// Per-sample mean squared prediction error.
float prediction_error(const float* pred, const float* target, std::int64_t n);

// 1 - cosine(f_a, f_m) of flattened per-sample features; 0 norms give 1.
float feature_inconsistency(const float* f_a, const float* f_m, std::int64_t n);

// S = w_p * (S_p - u_p)/d_p + w_f * (S_f - u_f)/d_f, with stddevs floored.
float fuse(float s_p, float s_f, const ScoreStats& stats, float w_p, float w_f);

struct AnomalyRecord {
  int frame_index = 0;
  int object_id = 0;
  float s_p = 0.f;
  float s_f = 0.f;
  float s = 0.f;
};

struct FrameScores {
  std::vector<float> score;         // one per frame
  std::vector<std::uint8_t> label;  // ground-truth frame labels
};

// Max over the records of each frame; frames without records get floor_score.
FrameScores frame_aggregate(const std::vector<AnomalyRecord>& records,
                            const std::vector<std::uint8_t>& frame_labels, float floor_score);

// Rank-based frame-level ROC AUC (Mann-Whitney; ties count one half). Throws
// ConfigError when labels contain a single class.
double roc_auc(const std::vector<float>& scores, const std::vector<std::uint8_t>& labels);

// CSV with header frame_index,score,label; one row per frame in order.
void export_curve(const FrameScores& fs, const std::string& path);
FrameScores import_curve(const std::string& path);

}  // namespace vad
