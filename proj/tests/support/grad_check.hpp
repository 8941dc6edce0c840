#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "vad/autograd.hpp"
#include "vad/rng.hpp"

namespace vad::testing {

// Central finite-difference gradient oracle. `make_loss` must rebuild the
// computation from the leaves' *current* values and return a scalar Var; the
// oracle itself never touches backward_fn, so it stays independent of the
// implementation path it checks.
struct GradCheckResult {
  int checked = 0;
  int failed = 0;
  int skipped_kinks = 0;
  float max_rel_err = 0.f;
};

inline float safeguarded_rel_err(float analytic, float numeric) {
  const float denom = std::max({1.f, std::abs(analytic), std::abs(numeric)});
  return std::abs(analytic - numeric) / denom;
}

template <typename MakeLoss>
GradCheckResult check_gradients(MakeLoss&& make_loss, const std::vector<Var>& leaves,
                                float step = 1e-3f, float tol = 1e-3f,
                                int max_coords_per_leaf = -1, Rng* coord_rng = nullptr) {
  GradCheckResult res;

  Var loss = make_loss();
  backward(loss);
  const float f0 = loss->value[0];
  std::vector<Tensor> analytic;
  for (const auto& leaf : leaves)
    analytic.push_back(leaf->has_grad ? leaf->grad : Tensor(leaf->value.shape()));
  zero_grad(leaves);

  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Node& leaf = *leaves[li];
    const std::int64_t n = leaf.value.numel();
    std::vector<std::int64_t> coords;
    if (max_coords_per_leaf < 0 || n <= max_coords_per_leaf) {
      for (std::int64_t k = 0; k < n; ++k) coords.push_back(k);
    } else {
      for (int k = 0; k < max_coords_per_leaf; ++k)
        coords.push_back(coord_rng ? coord_rng->uniform_int(0, static_cast<int>(n) - 1)
                                   : k * n / max_coords_per_leaf);
    }

    for (std::int64_t k : coords) {
      const float saved = leaf.value[k];
      leaf.value[k] = saved + step;
      const float fp = make_loss()->value[0];
      leaf.value[k] = saved - step;
      const float fm = make_loss()->value[0];
      leaf.value[k] = saved;

      // A second difference far larger than the slope signals that the
      // perturbation crossed a non-smooth point (relu kink, max/argmin
      // switch); the finite-difference oracle is invalid there.
      const float curvature = std::abs(fp + fm - 2.f * f0);
      const float slope_scale = std::abs(fp - fm);
      if (curvature > 0.25f * slope_scale && curvature > 16.f * step * step) {
        ++res.skipped_kinks;
        continue;
      }

      const float numeric = (fp - fm) / (2.f * step);
      const float rel = safeguarded_rel_err(analytic[li][k], numeric);
      res.max_rel_err = std::max(res.max_rel_err, rel);
      ++res.checked;
      if (rel >= tol) ++res.failed;
    }
  }
  return res;
}

}  // namespace vad::testing
