#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "vad/tensor.hpp"

namespace vad {

// Reverse-mode automatic differentiation over Tensor-valued nodes. Graphs are
// built per forward pass; parameters are long-lived leaf nodes whose grads the
// optimizer consumes. Ops are coarse (a whole convolution is one node) so the
// tape overhead is negligible next to the GEMMs.

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents
  const char* op = "leaf";

  // Adds g into grad, allocating on first use.
  void accumulate(const Tensor& g);
  void accumulate(const float* g, std::int64_t n);
};

Var make_leaf(Tensor value, bool requires_grad = false);
Var make_leaf(float scalar_value, bool requires_grad = false);

// Backpropagates from a scalar root (numel == 1). Seeds with 1.
void backward(const Var& root);

void zero_grad(const std::vector<Var>& params);

// ---- elementwise / scalar ----
Var add(const Var& a, const Var& b);          // same shape
Var sub(const Var& a, const Var& b);          // same shape
Var add_const(const Var& a, float c);
Var scale(const Var& a, float c);
Var relu(const Var& x);
Var sigmoid(const Var& x);
Var mean_all(const Var& x);                   // -> scalar
Var weighted_sum(const std::vector<Var>& terms, const std::vector<float>& weights);  // scalars

// ---- conv stack ----
// x: (B,Ci,H,W), w: (Co,Ci,k,k), b: (Co). Same-padding semantics via pad.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
// x: (B,Ci,H,W), w: (Ci,Co,k,k), b: (Co). Output spatial size = stride*H when
// out_pad == stride - 1 and pad == (k-1)/2.
Var conv_transpose2d(const Var& x, const Var& w, const Var& b, int stride, int pad, int out_pad);
Var max_pool2(const Var& x);                  // 2x2, stride 2; H and W must be even
Var concat_channels(const Var& a, const Var& b);

// Batch normalization over (B,H,W) per channel. In training mode uses batch
// statistics and updates the running buffers in place; in eval mode uses the
// running buffers. Biased variance both for normalization and the buffers.
Var batch_norm2d(const Var& x, const Var& gamma, const Var& beta, Tensor& run_mean,
                 Tensor& run_var, bool training, float momentum = 0.1f, float eps = 1e-5f);

// ---- attention / feature ops ----
Var flatten_rows(const Var& x);               // (B,C,H,W) -> (B,D)
// (B,D) x (N,D) -> (B,N) of cosine similarities. A zero query row yields a
// zero cosine row (and zero backward); a zero memory row is a hard error.
Var cosine_rows(const Var& q, const Var& m);
Var softmax_rows(const Var& x);               // (B,N) -> (B,N)
Var row_max(const Var& x);                    // (B,N) -> (B); grad routed to first argmax
Var scale_rows(const Var& x, const Var& s);   // x[b,...] * s[b]; s: (B)
Var cosine_pairwise(const Var& a, const Var& b);  // (B,D),(B,D) -> (B)
Var gather_rows(const Var& m, std::vector<int> idx);  // (N,D) -> (B,D); scatter-add backward
Var rowdiff_sq(const Var& a, const Var& b);   // (B,D),(B,D) -> (B): squared L2 of row difference

// ---- losses with constant targets ----
Var mse_loss(const Var& pred, const Tensor& target);  // mean of squared error -> scalar
// Mean absolute difference between neighbor-gradient magnitudes of pred and
// target, over both spatial directions; first row/column excluded. pred and
// target are (B,C,H,W).
Var gradient_diff_loss(const Var& pred, const Tensor& target);

}  // namespace vad
