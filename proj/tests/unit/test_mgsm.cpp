#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "vad/common.hpp"
#include "vad/mgsm.hpp"

using namespace vad;

namespace {

MemoryBank bank_from(std::vector<float> rows, int n, int d) {
  MemoryBank b;
  b.items = Tensor({n, d}, std::move(rows));
  return b;
}

// Brute-force nearest-two oracle: full scan with tie-break on lower index.
std::pair<int, int> nearest_two_oracle(const std::vector<float>& q, const MemoryBank& bank) {
  std::vector<std::pair<double, int>> dist;
  for (int j = 0; j < bank.n(); ++j) {
    double d2 = 0.0;
    for (int k = 0; k < bank.d(); ++k) {
      const double d = static_cast<double>(q[static_cast<std::size_t>(k)]) - bank.items.at(j, k);
      d2 += d * d;
    }
    dist.push_back({d2, j});
  }
  std::stable_sort(dist.begin(), dist.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  return {dist[0].second, dist[1].second};
}

}  // namespace

TEST_CASE("attend: closed-form softmax example") {
  // q=[1,0], m1=[1,0], m2=[0,1] -> cosines (1,0) -> weights (e/(e+1), 1/(e+1)).
  const MemoryBank bank = bank_from({1.f, 0.f, 0.f, 1.f}, 2, 2);
  const Tensor q({2}, {1.f, 0.f});
  const Attention att = attend(q, bank);
  const float e = std::exp(1.f);
  CHECK(att.weights[0] == doctest::Approx(e / (e + 1.f)).epsilon(1e-5));
  CHECK(att.weights[1] == doctest::Approx(1.f / (e + 1.f)).epsilon(1e-5));
  CHECK(att.weights[0] == doctest::Approx(0.7311f).epsilon(1e-3));
  CHECK(att.argmax_index == 0);
  CHECK(att.second_index == 1);
  CHECK_FALSE(att.degenerate);
}

TEST_CASE("attend: identical items give uniform weights") {
  const MemoryBank bank = bank_from({0.5f, 0.5f, 0.5f, 0.5f, 0.5f, 0.5f}, 3, 2);
  const Attention att = attend(Tensor({2}, {1.f, 2.f}), bank);
  for (float w : att.weights) CHECK(w == doctest::Approx(1.f / 3.f).epsilon(1e-6));
}

TEST_CASE("attend: orthogonal query gives uniform weights") {
  const MemoryBank bank = bank_from({1.f, 0.f, 0.f, 0.f, 1.f, 0.f}, 2, 3);
  const Attention att = attend(Tensor({3}, {0.f, 0.f, 2.f}), bank);
  CHECK(att.weights[0] == doctest::Approx(0.5f).epsilon(1e-6));
  CHECK(att.weights[1] == doctest::Approx(0.5f).epsilon(1e-6));
}

TEST_CASE("attend: zero query is degenerate uniform") {
  const MemoryBank bank = bank_from({1.f, 0.f, 0.f, 1.f}, 2, 2);
  const Attention att = attend(Tensor({2}), bank);
  CHECK(att.degenerate);
  CHECK(att.weights[0] == doctest::Approx(0.5f));
  CHECK(att.weights[1] == doctest::Approx(0.5f));
}

TEST_CASE("attend: zero memory item is a hard error") {
  const MemoryBank bank = bank_from({1.f, 0.f, 0.f, 0.f}, 2, 2);
  CHECK_THROWS_AS(attend(Tensor({2}, {1.f, 1.f}), bank), NumericError);
  CHECK_THROWS_AS(validate_bank(bank), NumericError);
}

TEST_CASE("attend: weights sum to one and addressing is scale invariant") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(2, 8), d = rng.uniform_int(2, 16);
    MemoryBank bank = init_memory_bank(n, d, 1, rng);
    Tensor q({d});
    for (int k = 0; k < d; ++k) q[k] = rng.normal(0.f, 1.f);
    const Attention att = attend(q, bank);
    double sum = 0.0;
    for (float w : att.weights) {
      CHECK(w > 0.f);
      sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(att.max_weight() > 1.f / static_cast<float>(n));
    CHECK(att.max_weight() <= 1.f);

    for (float c : {0.1f, 10.f}) {
      Tensor cq = q;
      for (int k = 0; k < d; ++k) cq[k] *= c;
      const Attention att2 = attend(cq, bank);
      for (int j = 0; j < n; ++j)
        CHECK(att2.weights[static_cast<std::size_t>(j)] ==
              doctest::Approx(att.weights[static_cast<std::size_t>(j)]).epsilon(1e-6));
    }
  }
}

TEST_CASE("nearest_two: worked example") {
  // Rows (0,0), (3,4), (6,8); query (0,0): m1 index 0 (d^2=0), m2 index 1 (d^2=25).
  const MemoryBank bank = bank_from({0.f, 0.f, 3.f, 4.f, 6.f, 8.f}, 3, 2);
  const auto [m1, m2] = nearest_two(Tensor({2}, {0.f, 0.f}), bank);
  CHECK(m1 == 0);
  CHECK(m2 == 1);
}

TEST_CASE("nearest_two: query equal to an item, duplicate tie-break") {
  const MemoryBank bank = bank_from({1.f, 1.f, 2.f, 2.f, 1.f, 1.f}, 3, 2);
  const auto [m1, m2] = nearest_two(Tensor({2}, {1.f, 1.f}), bank);
  CHECK(m1 == 0);  // distance 0, lower index wins over the duplicate at 2
  CHECK(m2 == 2);
}

TEST_CASE("nearest_two: needs two items") {
  const MemoryBank bank = bank_from({1.f, 1.f}, 1, 2);
  CHECK_THROWS_AS(nearest_two(Tensor({2}, {0.f, 0.f}), bank), ConfigError);
}

TEST_CASE("nearest_two matches the exhaustive oracle on random data") {
  Rng rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.uniform_int(2, 12), d = rng.uniform_int(1, 8);
    MemoryBank bank = init_memory_bank(n, d, 1, rng);
    std::vector<float> q(static_cast<std::size_t>(d));
    for (auto& v : q) v = rng.normal(0.f, 1.f);
    const auto got = nearest_two(q.data(), d, bank);
    const auto want = nearest_two_oracle(q, bank);
    CHECK(got.first == want.first);
    CHECK(got.second == want.second);
  }
}

TEST_CASE("suppress: uniform attention scales the normalized map by 1/N") {
  // Symmetric bank: every item identical, so lambda = 1/N exactly.
  const int c = 2, h = 2, w = 2, d = c * h * w;
  MemoryBank bank = bank_from(std::vector<float>(2 * static_cast<std::size_t>(d), 0.3f), 2, d);
  BnStats bn;
  bn.gamma = Tensor::full({c}, 1.f);
  bn.beta = Tensor({c});
  bn.run_mean = Tensor({c});
  bn.run_var = Tensor::full({c}, 1.f);
  bn.eps = 0.f;

  Tensor fmap({1, c, h, w});
  for (std::int64_t i = 0; i < fmap.numel(); ++i) fmap[i] = static_cast<float>(i) * 0.1f;

  std::vector<Attention> atts;
  const Tensor out = suppress_eval(fmap, bank, bn, &atts);
  REQUIRE(atts.size() == 1);
  CHECK(atts[0].max_weight() == doctest::Approx(0.5f).epsilon(1e-6));
  for (std::int64_t i = 0; i < out.numel(); ++i) {
    const float normed = fmap[i];  // identity batch-norm stats
    const float expect = std::max(0.f, 0.5f * normed);
    CHECK(out[i] == doctest::Approx(expect).epsilon(1e-5));
  }
}

TEST_CASE("suppress: colinear query reproduces the attend example lambda") {
  // Bank rows: the flattened map itself and an orthogonal vector; cosines
  // (1, 0) give lambda = e/(e+1) ~ 0.7311.
  const int c = 1, h = 2, w = 2, d = 4;
  Tensor fmap({1, c, h, w}, {1.f, 0.f, 0.f, 0.f});
  MemoryBank bank = bank_from({1.f, 0.f, 0.f, 0.f, 0.f, 1.f, 0.f, 0.f}, 2, d);
  BnStats bn;
  bn.gamma = Tensor::full({c}, 1.f);
  bn.beta = Tensor({c});
  bn.run_mean = Tensor({c});
  bn.run_var = Tensor::full({c}, 1.f);
  bn.eps = 0.f;
  std::vector<Attention> atts;
  const Tensor out = suppress_eval(fmap, bank, bn, &atts);
  CHECK(atts[0].max_weight() == doctest::Approx(0.7311f).epsilon(1e-3));
  for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out[i] >= 0.f);
  CHECK(out[0] == doctest::Approx(0.7311f).epsilon(1e-3));
}

TEST_CASE("suppress: dimension mismatch is a shape error") {
  MemoryBank bank = bank_from({1.f, 0.f, 0.f, 1.f}, 2, 2);
  BnStats bn;
  bn.gamma = Tensor::full({1}, 1.f);
  bn.beta = Tensor({1});
  bn.run_mean = Tensor({1});
  bn.run_var = Tensor::full({1}, 1.f);
  Tensor fmap({1, 1, 2, 2});
  CHECK_THROWS_AS(suppress_eval(fmap, bank, bn), ShapeError);
}

TEST_CASE("init_memory_bank: no zero rows, correct shape") {
  Rng rng(7);
  const MemoryBank bank = init_memory_bank(40, 64, 2, rng);
  CHECK(bank.n() == 40);
  CHECK(bank.d() == 64);
  CHECK(bank.level_index == 2);
  validate_bank(bank);  // must not throw
}
