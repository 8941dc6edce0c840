#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vad/rng.hpp"
#include "vad/scoring.hpp"
#include "vad/common.hpp"

using namespace vad;
namespace fs = std::filesystem;

namespace {

// O(n^2) pair-counting oracle: P(random anomalous frame outscores a random
// normal frame), ties half.
double auc_oracle(const std::vector<float>& scores, const std::vector<std::uint8_t>& labels) {
  double wins = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!labels[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (labels[j]) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

}  // namespace

TEST_CASE("prediction error and inconsistency worked values") {
  std::vector<float> a = {0.1f, 0.2f, 0.3f, 0.4f};
  CHECK(prediction_error(a.data(), a.data(), 4) == doctest::Approx(0.f));
  std::vector<float> b = a;
  for (auto& v : b) v += 0.1f;
  CHECK(prediction_error(b.data(), a.data(), 4) == doctest::Approx(0.01f));

  std::vector<float> fa = {1.f, 0.f};
  std::vector<float> fm = {0.f, 1.f};
  CHECK(feature_inconsistency(fa.data(), fa.data(), 2) == doctest::Approx(0.f));
  CHECK(feature_inconsistency(fa.data(), fm.data(), 2) == doctest::Approx(1.f));
  std::vector<float> fc = {1.f, 1.f};
  CHECK(feature_inconsistency(fc.data(), fa.data(), 2) ==
        doctest::Approx(1.f - 1.f / std::sqrt(2.f)));
}

TEST_CASE("fuse: centered case, unit z-score, weights") {
  ScoreStats s;
  s.u_p = 0.3f;
  s.d_p = 0.1f;
  s.u_f = 0.5f;
  s.d_f = 0.2f;
  CHECK(fuse(0.3f, 0.5f, s, 0.2f, 0.8f) == doctest::Approx(0.f));
  CHECK(fuse(0.3f + 0.1f, 0.5f, s, 1.f, 0.f) == doctest::Approx(1.f));
  // Default fusion weighting (0.2, 0.8).
  CHECK(fuse(0.4f, 0.7f, s, 0.2f, 0.8f) == doctest::Approx(0.2f * 1.f + 0.8f * 1.f));
}

TEST_CASE("fuse is affine: constant shifts never change the argmax frame") {
  ScoreStats s;
  std::vector<AnomalyRecord> recs;
  Rng rng(5);
  for (int i = 0; i < 10; ++i) {
    AnomalyRecord r;
    r.frame_index = i;
    r.s = rng.uniform(-2.f, 2.f);
    recs.push_back(r);
  }
  std::vector<std::uint8_t> labels(10, 0);
  FrameScores base = frame_aggregate(recs, labels, -10.f);
  for (auto& r : recs) r.s += 3.f;
  FrameScores shifted = frame_aggregate(recs, labels, -10.f);
  const auto argmax = [](const std::vector<float>& v) {
    return std::distance(v.begin(), std::max_element(v.begin(), v.end()));
  };
  CHECK(argmax(base.score) == argmax(shifted.score));
}

TEST_CASE("frame_aggregate: single object, max, and floor") {
  std::vector<std::uint8_t> labels = {0, 1, 0};
  std::vector<AnomalyRecord> recs;
  AnomalyRecord a;
  a.frame_index = 1;
  a.s = -1.f;
  recs.push_back(a);
  AnomalyRecord b;
  b.frame_index = 1;
  b.s = 2.f;
  recs.push_back(b);
  AnomalyRecord c;
  c.frame_index = 0;
  c.s = 0.5f;
  recs.push_back(c);

  const FrameScores fs = frame_aggregate(recs, labels, -9.f);
  CHECK(fs.score[0] == doctest::Approx(0.5f));  // single object: its score
  CHECK(fs.score[1] == doctest::Approx(2.f));   // {-1, 2} -> 2
  CHECK(fs.score[2] == doctest::Approx(-9.f));  // empty frame -> floor
}

TEST_CASE("roc_auc: worked example and symmetries") {
  // Scores (0.1, 0.4, 0.35, 0.8), labels (0,0,1,1): 3 of 4 pairs correct.
  std::vector<float> scores = {0.1f, 0.4f, 0.35f, 0.8f};
  std::vector<std::uint8_t> labels = {0, 0, 1, 1};
  CHECK(roc_auc(scores, labels) == doctest::Approx(0.75));

  // Perfect separation.
  CHECK(roc_auc({0.f, 0.1f, 0.9f, 1.f}, {0, 0, 1, 1}) == doctest::Approx(1.0));

  // Label inversion complements the statistic.
  std::vector<std::uint8_t> inverted = {1, 1, 0, 0};
  CHECK(roc_auc(scores, inverted) == doctest::Approx(0.25));

  // Single-class labels are undefined.
  CHECK_THROWS_AS(roc_auc({0.1f, 0.2f}, {1, 1}), ConfigError);
  CHECK_THROWS_AS(roc_auc({0.1f, 0.2f}, {0, 0}), ConfigError);
}

TEST_CASE("roc_auc matches the pair-counting oracle on random instances") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.uniform_int(2, 200);
    std::vector<float> scores;
    std::vector<std::uint8_t> labels;
    int pos = 0;
    for (int i = 0; i < n; ++i) {
      // Quantized scores induce plenty of ties.
      scores.push_back(std::round(rng.uniform(-2.f, 2.f) * 4.f) / 4.f);
      labels.push_back(static_cast<std::uint8_t>(rng.uniform(0.f, 1.f) < 0.4f));
      pos += labels.back();
    }
    if (pos == 0 || pos == n) {
      labels[0] = static_cast<std::uint8_t>(!labels[0]);
    }
    CHECK(roc_auc(scores, labels) == doctest::Approx(auc_oracle(scores, labels)).epsilon(1e-12));
  }
}

TEST_CASE("roc_auc is invariant under strictly monotone transforms") {
  Rng rng(9);
  std::vector<float> scores;
  std::vector<std::uint8_t> labels;
  for (int i = 0; i < 64; ++i) {
    scores.push_back(rng.uniform(-3.f, 3.f));
    labels.push_back(static_cast<std::uint8_t>(i % 3 == 0));
  }
  const double base = roc_auc(scores, labels);
  std::vector<float> warped;
  for (float s : scores) warped.push_back(std::exp(0.7f * s) + 2.f);
  CHECK(roc_auc(warped, labels) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("score curve export round trips") {
  FrameScores fs;
  fs.score = {0.5f, -1.25f, 3.75f};
  fs.label = {0, 1, 0};
  const fs::path path = fs::temp_directory_path() / "vad_test_curve.csv";
  export_curve(fs, path.string());

  std::ifstream f(path);
  std::string header;
  std::getline(f, header);
  CHECK(header == "frame_index,score,label");
  f.close();

  const FrameScores back = import_curve(path.string());
  REQUIRE(back.score.size() == 3);  // row count = frame count
  for (int i = 0; i < 3; ++i) {
    CHECK(back.score[static_cast<std::size_t>(i)] ==
          doctest::Approx(fs.score[static_cast<std::size_t>(i)]));
    CHECK(back.label[static_cast<std::size_t>(i)] == fs.label[static_cast<std::size_t>(i)]);
  }
  fs::remove(path);
}
