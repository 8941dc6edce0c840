#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vad {

// Dense row-major float tensor. Value semantics throughout; shapes are small
// integer vectors (rank 1..4 in practice).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);
  Tensor(std::vector<int> shape, float fill);
  Tensor(std::vector<int> shape, std::vector<float> values);

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<int> shape, float v) { return Tensor(std::move(shape), v); }
  static Tensor scalar(float v) { return Tensor({1}, v); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::vector<float>& vec() { return data_; }
  const std::vector<float>& vec() const { return data_; }

  float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  // NCHW accessor.
  float& at(int n, int c, int y, int x) {
    return data_[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }
  float at(int n, int c, int y, int x) const {
    return data_[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x)];
  }
  // 2-d accessor.
  float& at(int r, int c) { return data_[static_cast<std::size_t>(static_cast<std::int64_t>(r) * shape_[1] + c)]; }
  float at(int r, int c) const { return data_[static_cast<std::size_t>(static_cast<std::int64_t>(r) * shape_[1] + c)]; }

  void fill(float v);
  void zero() { fill(0.f); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  float item() const;  // throws ShapeError unless numel() == 1

  // Returns a copy with a new shape of identical element count.
  Tensor reshaped(std::vector<int> new_shape) const;

  std::string shape_str() const;

 private:
  std::vector<int> shape_;
  std::vector<float> data_;
};

std::string shape_to_string(const std::vector<int>& s);

// Throws ShapeError with a message naming `what`, expected, and actual.
void check_shape(const Tensor& t, const std::vector<int>& expected, const char* what);

}  // namespace vad
