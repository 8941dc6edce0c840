#include "vad/mgsm.hpp"

#include <algorithm>
#include <cmath>

#include "vad/common.hpp"

namespace vad {

MemoryBank init_memory_bank(int n_items, int dim, int level_index, Rng& rng) {
  if (n_items < 1) throw ConfigError("memory_sizes: item count must be >= 1");
  if (dim < 1) throw ConfigError("memory bank dimension must be >= 1");
  MemoryBank bank;
  bank.level_index = level_index;
  bank.items = Tensor({n_items, dim});
  const float stddev = 1.f / std::sqrt(static_cast<float>(dim));
  for (int j = 0; j < n_items; ++j) {
    for (int attempt = 0; attempt < 16; ++attempt) {
      double norm2 = 0.0;
      for (int k = 0; k < dim; ++k) {
        const float v = rng.normal(0.f, stddev);
        bank.items.at(j, k) = v;
        norm2 += static_cast<double>(v) * v;
      }
      if (norm2 > 0.0) break;  // zero rows are re-drawn
    }
  }
  validate_bank(bank);
  return bank;
}

void validate_bank(const MemoryBank& bank) {
  for (int j = 0; j < bank.n(); ++j) {
    double norm2 = 0.0;
    for (int k = 0; k < bank.d(); ++k) {
      const double v = bank.items.at(j, k);
      norm2 += v * v;
    }
    if (norm2 == 0.0)
      throw NumericError("memory item " + std::to_string(j) + " at level " +
                         std::to_string(bank.level_index) + " is the zero vector");
  }
}

Attention attend(const float* query, int dim, const MemoryBank& bank) {
  if (dim != bank.d())
    throw ShapeError("attend: query dimension " + std::to_string(dim) + " vs bank dimension " +
                     std::to_string(bank.d()));
  const int n = bank.n();
  Attention att;
  att.weights.assign(static_cast<std::size_t>(n), 0.f);

  double qn2 = 0.0;
  for (int k = 0; k < dim; ++k) qn2 += static_cast<double>(query[k]) * query[k];
  const double qn = std::sqrt(qn2);

  std::vector<double> cosines(static_cast<std::size_t>(n), 0.0);
  if (qn == 0.0) {
    att.degenerate = true;  // cosine defined as 0 against every item
  } else {
    for (int j = 0; j < n; ++j) {
      double dot = 0.0, mn2 = 0.0;
      const float* m = bank.items.data() + static_cast<std::int64_t>(j) * dim;
      for (int k = 0; k < dim; ++k) {
        dot += static_cast<double>(query[k]) * m[k];
        mn2 += static_cast<double>(m[k]) * m[k];
      }
      if (mn2 == 0.0)
        throw NumericError("attend: memory item " + std::to_string(j) + " is the zero vector");
      cosines[static_cast<std::size_t>(j)] = dot / (qn * std::sqrt(mn2));
    }
  }

  double mx = cosines[0];
  for (int j = 1; j < n; ++j) mx = std::max(mx, cosines[static_cast<std::size_t>(j)]);
  double sum = 0.0;
  for (int j = 0; j < n; ++j) {
    const double e = std::exp(cosines[static_cast<std::size_t>(j)] - mx);
    att.weights[static_cast<std::size_t>(j)] = static_cast<float>(e);
    sum += e;
  }
  for (int j = 0; j < n; ++j) att.weights[static_cast<std::size_t>(j)] /= static_cast<float>(sum);

  att.argmax_index = 0;
  for (int j = 1; j < n; ++j)
    if (att.weights[static_cast<std::size_t>(j)] > att.weights[static_cast<std::size_t>(att.argmax_index)])
      att.argmax_index = j;
  att.second_index = att.argmax_index == 0 ? 1 : 0;
  for (int j = 0; j < n; ++j) {
    if (j == att.argmax_index) continue;
    if (att.weights[static_cast<std::size_t>(j)] > att.weights[static_cast<std::size_t>(att.second_index)])
      att.second_index = j;
  }
  return att;
}

Attention attend(const Tensor& query, const MemoryBank& bank) {
  return attend(query.data(), static_cast<int>(query.numel()), bank);
}

std::pair<int, int> nearest_two(const float* query, int dim, const MemoryBank& bank) {
  if (bank.n() < 2) throw ConfigError("memory_sizes: nearest_two needs at least 2 items");
  if (dim != bank.d())
    throw ShapeError("nearest_two: query dimension " + std::to_string(dim) +
                     " vs bank dimension " + std::to_string(bank.d()));
  int best = -1, second = -1;
  double best_d = 0.0, second_d = 0.0;
  for (int j = 0; j < bank.n(); ++j) {
    const float* m = bank.items.data() + static_cast<std::int64_t>(j) * dim;
    double d2 = 0.0;
    for (int k = 0; k < dim; ++k) {
      const double d = static_cast<double>(query[k]) - m[k];
      d2 += d * d;
    }
    if (best < 0 || d2 < best_d) {
      second = best;
      second_d = best_d;
      best = j;
      best_d = d2;
    } else if (second < 0 || d2 < second_d) {
      second = j;
      second_d = d2;
    }
  }
  return {best, second};
}

std::pair<int, int> nearest_two(const Tensor& query, const MemoryBank& bank) {
  return nearest_two(query.data(), static_cast<int>(query.numel()), bank);
}

Tensor suppress_eval(const Tensor& feature_map, const MemoryBank& bank, const BnStats& bn,
                     std::vector<Attention>* att) {
  if (feature_map.ndim() != 4)
    throw ShapeError("suppress: need (B,C,H,W) feature map, got " + feature_map.shape_str());
  const int b = feature_map.dim(0), c = feature_map.dim(1);
  const int h = feature_map.dim(2), w = feature_map.dim(3);
  const int dim = c * h * w;
  if (dim != bank.d())
    throw ShapeError("suppress: flattened dimension " + std::to_string(dim) +
                     " vs bank dimension " + std::to_string(bank.d()));
  if (bn.gamma.numel() != c)
    throw ShapeError("suppress: batch-norm parameters sized for " +
                     std::to_string(bn.gamma.numel()) + " channels, map has " + std::to_string(c));

  Tensor out(feature_map.shape());
  if (att) att->clear();
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int bi = 0; bi < b; ++bi) {
    const float* sample = feature_map.data() + static_cast<std::int64_t>(bi) * dim;
    const Attention a = attend(sample, dim, bank);
    const float lambda = a.max_weight();
    if (att) att->push_back(a);
    for (int ci = 0; ci < c; ++ci) {
      const float inv_std = 1.f / std::sqrt(bn.run_var[ci] + bn.eps);
      const float g = bn.gamma[ci], bt = bn.beta[ci], mu = bn.run_mean[ci];
      const float* src = sample + static_cast<std::int64_t>(ci) * plane;
      float* dst = out.data() + (static_cast<std::int64_t>(bi) * c + ci) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        const float v = lambda * (g * (src[i] - mu) * inv_std + bt);
        dst[i] = v > 0.f ? v : 0.f;
      }
    }
  }
  return out;
}

}  // namespace vad
