#pragma once

#include <utility>
#include <vector>

#include "vad/rng.hpp"
#include "vad/tensor.hpp"

namespace vad {

// Memory-guided suppression: a per-level bank of learnable normality
// prototypes. Cosine-softmax addressing yields attention weights whose
// maximum becomes a scalar suppressor multiplied into the batch-normalized
// skip feature before it reaches the decoder.

struct MemoryBank {
  Tensor items;        // (N, D)
  int level_index = 1; // 1-based skip level

  int n() const { return items.dim(0); }
  int d() const { return items.dim(1); }
};

// Items drawn i.i.d. from N(0, 1/sqrt(D)); zero rows re-drawn so cosine is
// always defined.
MemoryBank init_memory_bank(int n_items, int dim, int level_index, Rng& rng);

// Throws NumericError if any item is the zero vector.
void validate_bank(const MemoryBank& bank);

struct Attention {
  std::vector<float> weights;  // N nonnegative reals summing to 1
  int argmax_index = 0;
  int second_index = 0;  // second-largest weight (ties: lower index)
  bool degenerate = false;  // zero query: weights defined as uniform 1/N

  float max_weight() const { return weights[static_cast<std::size_t>(argmax_index)]; }
};

// Softmax over cosine similarities between the query and every item. A zero
// query is degenerate: every cosine is defined as 0, so weights are uniform.
Attention attend(const float* query, int dim, const MemoryBank& bank);
Attention attend(const Tensor& query, const MemoryBank& bank);

// Indices of the two items nearest to the query in Euclidean distance; ties
// broken by lower index. Throws ConfigError when the bank has fewer than two
// items.
std::pair<int, int> nearest_two(const float* query, int dim, const MemoryBank& bank);
std::pair<int, int> nearest_two(const Tensor& query, const MemoryBank& bank);

// Batch-normalization state for the plain (non-autograd) suppress path.
struct BnStats {
  Tensor gamma, beta, run_mean, run_var;
  float eps = 1e-5f;
};

// Eval-mode suppression of a (B,C,H,W) feature map: per sample, lambda is the
// maximum attention weight of the flattened map against the bank; the output
// is relu(lambda * batchnorm(map)). Per-sample attentions returned through
// `att` when non-null.
Tensor suppress_eval(const Tensor& feature_map, const MemoryBank& bank, const BnStats& bn,
                     std::vector<Attention>* att = nullptr);

}  // namespace vad
