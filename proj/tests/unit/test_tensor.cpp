#include <doctest.h>

#include <limits>

#include "vad/common.hpp"
#include "vad/tensor.hpp"

using namespace vad;

TEST_CASE("tensor construction and accessors") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.ndim() == 2);
  t.at(1, 2) = 5.f;
  CHECK(t[5] == 5.f);

  Tensor f = Tensor::full({2, 2}, 0.5f);
  CHECK(f[0] == 0.5f);
  CHECK(f[3] == 0.5f);

  Tensor n({1, 2, 2, 2});
  n.at(0, 1, 1, 1) = 3.f;
  CHECK(n[7] == 3.f);
}

TEST_CASE("tensor shape errors") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>{1.f}), ShapeError);
  Tensor t({4});
  CHECK_THROWS_AS(t.reshaped({3}), ShapeError);
  CHECK_THROWS_AS(t.item(), ShapeError);
  CHECK(Tensor::scalar(2.f).item() == 2.f);
}

TEST_CASE("tensor finiteness") {
  Tensor t({2});
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<float>::infinity();
  CHECK_FALSE(t.all_finite());
}
