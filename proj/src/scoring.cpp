#include "vad/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "vad/common.hpp"

namespace vad {

float prediction_error(const float* pred, const float* target, std::int64_t n) {
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pred[i]) - target[i];
    s += d * d;
  }
  return static_cast<float>(s / static_cast<double>(n));
}

float feature_inconsistency(const float* f_a, const float* f_m, std::int64_t n) {
  double dot = 0.0, na = 0.0, nm = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    dot += static_cast<double>(f_a[i]) * f_m[i];
    na += static_cast<double>(f_a[i]) * f_a[i];
    nm += static_cast<double>(f_m[i]) * f_m[i];
  }
  if (na == 0.0 || nm == 0.0) return 1.f;  // degenerate feature: maximally inconsistent
  return static_cast<float>(1.0 - dot / (std::sqrt(na) * std::sqrt(nm)));
}

float fuse(float s_p, float s_f, const ScoreStats& stats, float w_p, float w_f) {
  const float dp = std::max(stats.d_p, kStdFloor);
  const float df = std::max(stats.d_f, kStdFloor);
  return w_p * (s_p - stats.u_p) / dp + w_f * (s_f - stats.u_f) / df;
}

FrameScores frame_aggregate(const std::vector<AnomalyRecord>& records,
                            const std::vector<std::uint8_t>& frame_labels, float floor_score) {
  FrameScores out;
  out.label = frame_labels;
  out.score.assign(frame_labels.size(), floor_score);
  std::vector<std::uint8_t> seen(frame_labels.size(), 0);
  for (const auto& r : records) {
    if (r.frame_index < 0 || r.frame_index >= static_cast<int>(frame_labels.size()))
      throw ShapeError("frame_aggregate: record frame index " + std::to_string(r.frame_index) +
                       " out of range");
    auto& slot = out.score[static_cast<std::size_t>(r.frame_index)];
    if (!seen[static_cast<std::size_t>(r.frame_index)]) {
      slot = r.s;
      seen[static_cast<std::size_t>(r.frame_index)] = 1;
    } else {
      slot = std::max(slot, r.s);
    }
  }
  return out;
}

double roc_auc(const std::vector<float>& scores, const std::vector<std::uint8_t>& labels) {
  if (scores.size() != labels.size())
    throw ShapeError("roc_auc: score/label count mismatch");
  std::size_t n_pos = 0, n_neg = 0;
  for (auto l : labels) (l ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw ConfigError("roc_auc: labels contain a single class; AUC undefined");

  // Average ranks with ties, then the Mann-Whitney identity.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }
  double pos_rank_sum = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k)
    if (labels[k]) pos_rank_sum += rank[k];
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

void export_curve(const FrameScores& fs, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f << "frame_index,score,label\n";
  f.precision(9);
  for (std::size_t i = 0; i < fs.score.size(); ++i)
    f << i << "," << fs.score[i] << "," << static_cast<int>(fs.label[i]) << "\n";
  if (!f) throw FormatError("short write to " + path);
}

FrameScores import_curve(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open " + path);
  std::string line;
  if (!std::getline(f, line) || line != "frame_index,score,label")
    throw FormatError("bad score-curve header in " + path);
  FrameScores out;
  int expect = 0;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c))
      throw FormatError("bad score-curve row in " + path + ": " + line);
    if (std::stoi(a) != expect)
      throw FormatError("non-contiguous frame indices in " + path);
    out.score.push_back(std::stof(b));
    out.label.push_back(static_cast<std::uint8_t>(std::stoi(c) != 0));
    ++expect;
  }
  return out;
}

}  // namespace vad
