#include "vad/objective.hpp"

#include "vad/common.hpp"
#include "vad/mgsm.hpp"

namespace vad {

Var intensity_loss(const Var& pred, const Tensor& target) { return mse_loss(pred, target); }

Var gradient_loss(const Var& pred, const Tensor& target) {
  return gradient_diff_loss(pred, target);
}

Var alignment_loss(const Var& f_a, const Var& f_m) {
  Var cos = cosine_pairwise(flatten_rows(f_a), flatten_rows(f_m));
  // 1 - cos per sample, then batch mean.
  return mean_all(add_const(scale(cos, -1.f), 1.f));
}

NearestIndices nearest_two_batch(const Tensor& queries, const Tensor& bank) {
  if (queries.ndim() != 2 || bank.ndim() != 2 || queries.dim(1) != bank.dim(1))
    throw ShapeError("nearest_two_batch: incompatible shapes " + queries.shape_str() + " vs " +
                     bank.shape_str());
  MemoryBank mb;
  mb.items = bank;
  NearestIndices out;
  for (int i = 0; i < queries.dim(0); ++i) {
    const auto [m1, m2] =
        nearest_two(queries.data() + static_cast<std::int64_t>(i) * queries.dim(1),
                    queries.dim(1), mb);
    out.first.push_back(m1);
    out.second.push_back(m2);
  }
  return out;
}

Var compactness_loss(const std::vector<Var>& queries, const std::vector<Var>& banks) {
  if (queries.size() != banks.size())
    throw ShapeError("compactness_loss: query/bank level count mismatch");
  std::vector<Var> level_means;
  std::vector<float> level_weights;
  for (std::size_t l = 0; l < queries.size(); ++l) {
    const auto idx = nearest_two_batch(queries[l]->value, banks[l]->value);
    Var m1 = gather_rows(banks[l], idx.first);
    level_means.push_back(mean_all(rowdiff_sq(queries[l], m1)));
    level_weights.push_back(1.f / static_cast<float>(queries.size()));
  }
  return weighted_sum(level_means, level_weights);
}

Var diversity_loss(const std::vector<Var>& queries, const std::vector<Var>& banks, float margin) {
  if (queries.size() != banks.size())
    throw ShapeError("diversity_loss: query/bank level count mismatch");
  std::vector<Var> level_means;
  std::vector<float> level_weights;
  for (std::size_t l = 0; l < queries.size(); ++l) {
    const auto idx = nearest_two_batch(queries[l]->value, banks[l]->value);
    Var m1 = gather_rows(banks[l], idx.first);
    Var m2 = gather_rows(banks[l], idx.second);
    Var d1 = rowdiff_sq(queries[l], m1);
    Var d2 = rowdiff_sq(queries[l], m2);
    // Hinge keeps the term bounded below; the raw difference d1 - d2 is <= 0
    // by the nearest-item ordering.
    Var hinge = relu(add_const(sub(d1, d2), margin));
    level_means.push_back(mean_all(hinge));
    level_weights.push_back(1.f / static_cast<float>(queries.size()));
  }
  return weighted_sum(level_means, level_weights);
}

Var total_loss(const Var& intensity, const Var& gradient, const Var& align, const Var& compact,
               const Var& diversity, const LossWeights& weights, LossReport* report) {
  std::vector<Var> terms;
  std::vector<float> ws;
  auto push = [&](const Var& v, float w, float* slot) {
    if (v) {
      terms.push_back(v);
      ws.push_back(w);
      if (slot) *slot = v->value[0];
    } else if (slot) {
      *slot = 0.f;
    }
  };
  LossReport rep;
  push(intensity, weights.intensity, &rep.intensity);
  push(gradient, weights.gradient, &rep.gradient);
  push(align, weights.align, &rep.align);
  push(compact, weights.compact, &rep.compact);
  push(diversity, weights.diversity, &rep.diversity);
  Var total = terms.empty() ? make_leaf(0.f, false) : weighted_sum(terms, ws);
  rep.total = total->value[0];
  if (report) *report = rep;
  return total;
}

}  // namespace vad
