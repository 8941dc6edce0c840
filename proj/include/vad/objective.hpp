#pragma once

#include <vector>

#include "vad/autograd.hpp"

namespace vad {

// Training losses. Intensity and gradient terms are per-element means so the
// default weights stay resolution- and batch-independent; the feature terms
// are per-query means.

struct LossWeights {
  float intensity = 1.f;
  float gradient = 1.f;
  float align = 1.f;
  float compact = 5e-3f;
  float diversity = 1e-4f;
  float weight_decay = 1e-5f;     // decoupled, applied by the optimizer
  float diversity_margin = 1.f;   // hinge margin of the diversity loss
};

struct LossReport {
  float intensity = 0.f;
  float gradient = 0.f;
  float align = 0.f;
  float compact = 0.f;
  float diversity = 0.f;
  float total = 0.f;
};

// Mean squared error between prediction and target.
Var intensity_loss(const Var& pred, const Tensor& target);

// Mean absolute difference of neighbor-gradient magnitudes over both spatial
// directions, boundary row/column excluded.
Var gradient_loss(const Var& pred, const Tensor& target);

// 1 - cosine between the flattened bottleneck features, batch-averaged.
Var alignment_loss(const Var& f_a, const Var& f_m);

// Per-query first/second nearest item indices under Euclidean distance,
// computed from current values (selection is constant within a step).
struct NearestIndices {
  std::vector<int> first;
  std::vector<int> second;
};
NearestIndices nearest_two_batch(const Tensor& queries, const Tensor& bank);

// Mean over every query at every level of ||q - m1||^2.
Var compactness_loss(const std::vector<Var>& queries, const std::vector<Var>& banks);

// Mean over queries of max(0, ||q-m1||^2 - ||q-m2||^2 + margin).
Var diversity_loss(const std::vector<Var>& queries, const std::vector<Var>& banks, float margin);

// Weighted combination of the five terms. Null terms contribute zero. The
// weight-decay term is handled by the optimizer, not here. Fills `report`
// when non-null.
Var total_loss(const Var& intensity, const Var& gradient, const Var& align, const Var& compact,
               const Var& diversity, const LossWeights& weights, LossReport* report = nullptr);

}  // namespace vad
