#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "vad/net.hpp"
#include "vad/objective.hpp"
#include "vad/scoring.hpp"
#include "vad/stcpipe.hpp"

namespace vad {

struct TrainConfig {
  ArchConfig arch;
  std::vector<int> memory_sizes = {40, 40, 40};
  LossWeights weights;
  float lr_init = 2e-4f;
  float lr_decay = 0.8f;
  int lr_decay_every_epochs = 10;
  int batch_size = 128;
  int epochs = 60;
  std::uint64_t seed = 0;
  // Score-fusion weights (w_p, w_f); baked into the checkpoint stats.
  float score_w_p = 0.2f;
  float score_w_f = 0.8f;

  void validate() const;
};

// Adam with decoupled weight decay. Decay applies only to convolution-style
// weight tensors (flagged per parameter); moments live here so checkpoints
// can round-trip optimizer state.
class Adam {
 public:
  Adam(std::vector<Var> params, std::vector<bool> decay_flags, float lr, float weight_decay,
       float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f);

  void set_lr(float lr) { lr_ = lr; }
  float lr() const { return lr_; }
  void step();

  std::vector<Tensor>& m() { return m_; }
  std::vector<Tensor>& v() { return v_; }
  std::int64_t t() const { return t_; }
  void set_t(std::int64_t t) { t_ = t; }

 private:
  std::vector<Var> params_;
  std::vector<bool> decay_;
  std::vector<Tensor> m_, v_;
  float lr_, wd_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
};

struct Checkpoint {
  ModelParams model;
  TrainConfig config;
  int epoch = 0;
  ScoreStats stats;
  // Adam moments aligned with model.named_parameters() order.
  std::vector<Tensor> adam_m, adam_v;
  std::int64_t adam_t = 0;
};

// Assembles model inputs from STCs. For the standard model: appearance input
// is frames t-4..t-1, flow input all 4 flow fields, target the frame at t.
// Motion-only models consume the first 3 flow fields and predict the 4th.
void fill_model_inputs(const ArchConfig& arch, const std::vector<const Stc*>& stcs, Tensor* app_in,
                       Tensor* flow_in, Tensor* target);

// Trains on normal STCs. Deterministic given (config, data order, thread
// count). Emits one JSON line per optimizer step to `log` when non-null.
// Throws ConfigError on empty/anomalous data and NumericError (with step
// index and term breakdown) if the loss leaves the finite range.
Checkpoint train(const std::vector<Stc>& data, const TrainConfig& config, std::ostream* log);

// One eval pass over normal training STCs; fills and returns population
// statistics of S_p and S_f (stddev floored at kStdFloor), plus the smallest
// fused training score.
ScoreStats fit_score_stats(Checkpoint& ckpt, const std::vector<Stc>& data);

// Eval-mode scoring of arbitrary STCs against the checkpoint's statistics.
std::vector<AnomalyRecord> score_stcs(Checkpoint& ckpt, const std::vector<Stc>& stcs);

// Floor score for frames with no objects: one z-unit below the smallest
// fused training score.
float floor_score(const ScoreStats& stats);

// Scores one sequence: STC extraction, per-record scores, per-frame max.
struct SequenceScores {
  std::vector<AnomalyRecord> records;
  FrameScores frames;
};
SequenceScores score_sequence(Checkpoint& ckpt, const VideoSequence& seq, BoxMode box_mode,
                              FlowSource flow_source, const BlockMatchParams* bm = nullptr);

// Checkpoint container: raw little-endian float payloads indexed by a JSON
// header; save -> load -> forward reproduces eval outputs bit-exactly.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace vad
