#include "vad/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include <json.hpp>

#include "vad/common.hpp"
#include "vad/rng.hpp"
#include "vad/runconfig.hpp"

using nlohmann::json;

namespace vad {

void TrainConfig::validate() const {
  arch.validate();
  if (lr_init <= 0.f) throw ConfigError("train.lr_init: must be > 0");
  if (lr_decay <= 0.f || lr_decay > 1.f) throw ConfigError("train.lr_decay: must be in (0,1]");
  if (lr_decay_every_epochs < 1) throw ConfigError("train.lr_decay_every_epochs: must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
  if (epochs < 1) throw ConfigError("train.epochs: must be >= 1");
  if (score_w_p < 0.f || score_w_f < 0.f)
    throw ConfigError("train.score_w: fusion weights must be nonnegative");
  if (arch.mgsm_enabled && static_cast<int>(memory_sizes.size()) != arch.skip_levels())
    throw ConfigError("train.memory_sizes: need one entry per skip level");
}

Adam::Adam(std::vector<Var> params, std::vector<bool> decay_flags, float lr, float weight_decay,
           float beta1, float beta2, float eps)
    : params_(std::move(params)),
      decay_(std::move(decay_flags)),
      lr_(lr),
      wd_(weight_decay),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {
  if (decay_.size() != params_.size())
    throw ConfigError("Adam: decay flag count mismatch");
  for (const auto& p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const float bc1 = 1.f - std::pow(beta1_, static_cast<float>(t_));
  const float bc2 = 1.f - std::pow(beta2_, static_cast<float>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Node& p = *params_[i];
    if (!p.has_grad) continue;  // parameter unused this step
    float* w = p.value.data();
    const float* g = p.grad.data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    const bool decay = decay_[i];
    for (std::int64_t k = 0; k < p.value.numel(); ++k) {
      m[k] = beta1_ * m[k] + (1.f - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.f - beta2_) * g[k] * g[k];
      const float mhat = m[k] / bc1;
      const float vhat = v[k] / bc2;
      float upd = mhat / (std::sqrt(vhat) + eps_);
      if (decay) upd += wd_ * w[k];
      w[k] -= lr_ * upd;
    }
  }
}

void fill_model_inputs(const ArchConfig& arch, const std::vector<const Stc*>& stcs, Tensor* app_in,
                       Tensor* flow_in, Tensor* target) {
  const int b = static_cast<int>(stcs.size());
  const int s = kStcSize;
  const int plane = s * s;
  for (const Stc* stc : stcs)
    if (stc->appearance.size() != static_cast<std::size_t>(kStcFrames) * plane ||
        stc->flow.size() != static_cast<std::size_t>(kStcFlows) * plane * 2)
      throw ShapeError("fill_model_inputs: malformed STC (appearance " +
                       std::to_string(stc->appearance.size()) + ", flow " +
                       std::to_string(stc->flow.size()) + ")");

  if (arch.motion_only()) {
    // First 3 flow fields in, 4th as the prediction target.
    *app_in = Tensor();
    *flow_in = Tensor({b, 2 * (kStcFlows - 1), s, s});
    *target = Tensor({b, 2, s, s});
    for (int bi = 0; bi < b; ++bi) {
      const Stc& stc = *stcs[static_cast<std::size_t>(bi)];
      for (int k = 0; k < kStcFlows; ++k) {
        const float* src = stc.flow.data() + static_cast<std::size_t>(k) * plane * 2;
        for (int i = 0; i < plane; ++i)
          for (int comp = 0; comp < 2; ++comp) {
            const float v = src[i * 2 + comp];
            if (k < kStcFlows - 1)
              (*flow_in)[((static_cast<std::int64_t>(bi) * 2 * (kStcFlows - 1)) + 2 * k + comp) * plane + i] = v;
            else
              (*target)[((static_cast<std::int64_t>(bi) * 2) + comp) * plane + i] = v;
          }
      }
    }
    return;
  }

  if (arch.appearance_enabled) {
    *app_in = Tensor({b, kStcFrames - 1, s, s});
    *target = Tensor({b, 1, s, s});
    for (int bi = 0; bi < b; ++bi) {
      const Stc& stc = *stcs[static_cast<std::size_t>(bi)];
      for (int k = 0; k < kStcFrames - 1; ++k)
        std::memcpy(app_in->data() + ((static_cast<std::int64_t>(bi) * (kStcFrames - 1)) + k) * plane,
                    stc.appearance.data() + static_cast<std::size_t>(k) * plane,
                    sizeof(float) * static_cast<std::size_t>(plane));
      std::memcpy(target->data() + static_cast<std::int64_t>(bi) * plane,
                  stc.appearance.data() + static_cast<std::size_t>(kStcFrames - 1) * plane,
                  sizeof(float) * static_cast<std::size_t>(plane));
    }
  } else {
    *app_in = Tensor();
  }

  if (arch.motion_enabled) {
    *flow_in = Tensor({b, 2 * kStcFlows, s, s});
    for (int bi = 0; bi < b; ++bi) {
      const Stc& stc = *stcs[static_cast<std::size_t>(bi)];
      for (int k = 0; k < kStcFlows; ++k) {
        const float* src = stc.flow.data() + static_cast<std::size_t>(k) * plane * 2;
        for (int i = 0; i < plane; ++i) {
          (*flow_in)[((static_cast<std::int64_t>(bi) * 2 * kStcFlows) + 2 * k + 0) * plane + i] = src[i * 2 + 0];
          (*flow_in)[((static_cast<std::int64_t>(bi) * 2 * kStcFlows) + 2 * k + 1) * plane + i] = src[i * 2 + 1];
        }
      }
    }
  } else {
    *flow_in = Tensor();
  }
}

namespace {

std::vector<bool> decay_flags_for(const ModelParams& model) {
  std::vector<bool> flags;
  for (const auto& [name, v] : model.named_parameters())
    flags.push_back(name.size() >= 2 && name.compare(name.size() - 2, 2, ".w") == 0);
  return flags;
}

struct BatchLosses {
  Var total;
  LossReport report;
};

BatchLosses compute_losses(ModelParams& model, const ForwardResult& fwd, const Tensor& target,
                           const TrainConfig& cfg) {
  const ArchConfig& arch = model.arch;
  Var l_int = intensity_loss(fwd.prediction, target);
  Var l_gd = gradient_loss(fwd.prediction, target);
  Var l_align;
  if (arch.align_enabled && fwd.f_a && fwd.f_m) l_align = alignment_loss(fwd.f_a, fwd.f_m);
  Var l_comp, l_diver;
  if (arch.mgsm_enabled && !fwd.queries.empty()) {
    std::vector<Var> banks;
    for (const auto& lvl : model.mgsm) banks.push_back(lvl.bank);
    l_comp = compactness_loss(fwd.queries, banks);
    l_diver = diversity_loss(fwd.queries, banks, cfg.weights.diversity_margin);
  }
  BatchLosses out;
  out.total = total_loss(l_int, l_gd, l_align, l_comp, l_diver, cfg.weights, &out.report);
  return out;
}

}  // namespace

Checkpoint train(const std::vector<Stc>& data, const TrainConfig& config, std::ostream* log) {
  config.validate();
  if (data.empty()) throw ConfigError("train: dataset is empty");
  for (const auto& stc : data)
    if (stc.is_anomalous)
      throw ConfigError("train: dataset contains anomalous STCs; training data must be normal");

  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.model = ModelParams::init(config.arch, config.memory_sizes, config.seed);

  auto params = ckpt.model.parameters();
  Adam adam(params, decay_flags_for(ckpt.model), config.lr_init, config.weights.weight_decay);

  Rng shuffle_rng(Rng::mix(config.seed, 0x5EEDULL));
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  std::int64_t step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const float lr =
        config.lr_init * std::pow(config.lr_decay, static_cast<float>((epoch - 1) / config.lr_decay_every_epochs));
    adam.set_lr(lr);
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const Stc*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&data[order[i]]);

      Tensor app, flow, target;
      fill_model_inputs(config.arch, batch, &app, &flow, &target);
      ForwardResult fwd = forward(ckpt.model, app, flow, /*training=*/true);
      BatchLosses losses = compute_losses(ckpt.model, fwd, target, config);

      if (!std::isfinite(losses.report.total))
        throw NumericError("train: non-finite loss at step " + std::to_string(step) +
                           " (intensity=" + std::to_string(losses.report.intensity) +
                           ", gradient=" + std::to_string(losses.report.gradient) +
                           ", align=" + std::to_string(losses.report.align) +
                           ", compact=" + std::to_string(losses.report.compact) +
                           ", diversity=" + std::to_string(losses.report.diversity) + ")");

      zero_grad(params);
      backward(losses.total);
      adam.step();

      if (log) {
        json j = {{"step", step},
                  {"epoch", epoch},
                  {"lr", lr},
                  {"intensity", losses.report.intensity},
                  {"gradient", losses.report.gradient},
                  {"align", losses.report.align},
                  {"compact", losses.report.compact},
                  {"diversity", losses.report.diversity},
                  {"total", losses.report.total}};
        (*log) << j.dump() << "\n";
      }
      ++step;
    }
    ckpt.epoch = epoch;
  }

  ckpt.adam_m = adam.m();
  ckpt.adam_v = adam.v();
  ckpt.adam_t = adam.t();
  return ckpt;
}

namespace {

struct EvalScores {
  std::vector<float> s_p, s_f;
  std::vector<int> frame_index, object_id;
};

EvalScores eval_scores(Checkpoint& ckpt, const std::vector<Stc>& stcs) {
  const ArchConfig& arch = ckpt.model.arch;
  const int batch = std::max(1, ckpt.config.batch_size);
  EvalScores out;
  for (std::size_t start = 0; start < stcs.size(); start += static_cast<std::size_t>(batch)) {
    const std::size_t end = std::min(stcs.size(), start + static_cast<std::size_t>(batch));
    std::vector<const Stc*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&stcs[i]);
    Tensor app, flow, target;
    fill_model_inputs(arch, ptrs, &app, &flow, &target);
    ForwardResult fwd = forward(ckpt.model, app, flow, /*training=*/false);

    const int b = static_cast<int>(ptrs.size());
    const std::int64_t out_per = fwd.prediction->value.numel() / b;
    const std::int64_t feat_per = fwd.f_a ? fwd.f_a->value.numel() / b : 0;
    for (int bi = 0; bi < b; ++bi) {
      const float sp = prediction_error(fwd.prediction->value.data() + bi * out_per,
                                        target.data() + bi * out_per, out_per);
      float sf = 0.f;
      if (fwd.f_a && fwd.f_m)
        sf = feature_inconsistency(fwd.f_a->value.data() + bi * feat_per,
                                   fwd.f_m->value.data() + bi * feat_per, feat_per);
      out.s_p.push_back(sp);
      out.s_f.push_back(sf);
      out.frame_index.push_back(ptrs[static_cast<std::size_t>(bi)]->frame_index);
      out.object_id.push_back(ptrs[static_cast<std::size_t>(bi)]->object_id);
    }
  }
  return out;
}

void mean_std(const std::vector<float>& xs, float* mean, float* stddev) {
  double s = 0.0;
  for (float x : xs) s += x;
  const double mu = s / static_cast<double>(xs.size());
  double v = 0.0;
  for (float x : xs) {
    const double d = x - mu;
    v += d * d;
  }
  // Population standard deviation.
  *mean = static_cast<float>(mu);
  *stddev = static_cast<float>(std::sqrt(v / static_cast<double>(xs.size())));
}

}  // namespace

ScoreStats fit_score_stats(Checkpoint& ckpt, const std::vector<Stc>& data) {
  if (data.empty()) throw ConfigError("fit_score_stats: dataset is empty");
  const EvalScores ev = eval_scores(ckpt, data);
  ScoreStats stats;
  mean_std(ev.s_p, &stats.u_p, &stats.d_p);
  mean_std(ev.s_f, &stats.u_f, &stats.d_f);
  stats.d_p = std::max(stats.d_p, kStdFloor);
  stats.d_f = std::max(stats.d_f, kStdFloor);
  stats.fitted = true;
  float fused_min = std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i < ev.s_p.size(); ++i)
    fused_min = std::min(fused_min, fuse(ev.s_p[i], ev.s_f[i], stats, ckpt.config.score_w_p,
                                         ckpt.config.score_w_f));
  stats.fused_min = fused_min;
  ckpt.stats = stats;
  return stats;
}

std::vector<AnomalyRecord> score_stcs(Checkpoint& ckpt, const std::vector<Stc>& stcs) {
  if (!ckpt.stats.fitted)
    throw ConfigError("score_stcs: checkpoint has no fitted score statistics");
  const EvalScores ev = eval_scores(ckpt, stcs);
  std::vector<AnomalyRecord> out;
  for (std::size_t i = 0; i < ev.s_p.size(); ++i) {
    AnomalyRecord r;
    r.frame_index = ev.frame_index[i];
    r.object_id = ev.object_id[i];
    r.s_p = ev.s_p[i];
    r.s_f = ev.s_f[i];
    r.s = fuse(r.s_p, r.s_f, ckpt.stats, ckpt.config.score_w_p, ckpt.config.score_w_f);
    out.push_back(r);
  }
  return out;
}

float floor_score(const ScoreStats& stats) { return stats.fused_min - 1.f; }

SequenceScores score_sequence(Checkpoint& ckpt, const VideoSequence& seq, BoxMode box_mode,
                              FlowSource flow_source, const BlockMatchParams* bm) {
  SequenceScores out;
  const auto stcs = build_sequence_stcs(seq, box_mode, flow_source, bm);
  out.records = score_stcs(ckpt, stcs);
  out.frames = frame_aggregate(out.records, seq.frame_labels, floor_score(ckpt.stats));
  return out;
}

// ---------------------------------------------------------------------------
// checkpoint io
// ---------------------------------------------------------------------------

namespace {
constexpr char kCkptMagic[4] = {'V', 'A', 'D', 'C'};
constexpr std::uint32_t kCkptVersion = 1;
}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  json header;
  header["config"] = to_json(ckpt.config);
  header["epoch"] = ckpt.epoch;
  header["adam_t"] = ckpt.adam_t;
  header["stats"] = {{"u_p", ckpt.stats.u_p}, {"d_p", ckpt.stats.d_p}, {"u_f", ckpt.stats.u_f},
                     {"d_f", ckpt.stats.d_f}, {"fused_min", ckpt.stats.fused_min},
                     {"fitted", ckpt.stats.fitted}};

  std::vector<std::pair<std::string, const Tensor*>> blobs;
  const auto named = ckpt.model.named_parameters();
  for (const auto& [name, v] : named) blobs.push_back({"param:" + name, &v->value});
  auto& model = const_cast<ModelParams&>(ckpt.model);
  for (const auto& [name, t] : model.named_buffers()) blobs.push_back({"buffer:" + name, t});
  for (std::size_t i = 0; i < ckpt.adam_m.size(); ++i)
    blobs.push_back({"adam_m:" + named[i].first, &ckpt.adam_m[i]});
  for (std::size_t i = 0; i < ckpt.adam_v.size(); ++i)
    blobs.push_back({"adam_v:" + named[i].first, &ckpt.adam_v[i]});

  json jtensors = json::array();
  for (const auto& [name, t] : blobs)
    jtensors.push_back({{"name", name}, {"shape", t->shape()}});
  header["tensors"] = std::move(jtensors);

  const std::string hs = header.dump();
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  f.write(kCkptMagic, 4);
  const std::uint32_t ver = kCkptVersion;
  f.write(reinterpret_cast<const char*>(&ver), sizeof(ver));
  const std::uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : blobs)
    f.write(reinterpret_cast<const char*>(t->data()),
            static_cast<std::streamsize>(t->numel() * sizeof(float)));
  if (!f) throw FormatError("short write to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw FormatError("bad checkpoint magic in " + path, 0);
  std::uint32_t ver = 0;
  f.read(reinterpret_cast<char*>(&ver), sizeof(ver));
  if (!f || ver != kCkptVersion) throw FormatError("unsupported checkpoint version", 4);
  std::uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!f || hlen > (1ULL << 30)) throw FormatError("implausible checkpoint header length", 8);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw FormatError("truncated checkpoint header", 16);
  json header;
  try {
    header = json::parse(hs);
  } catch (const json::exception& e) {
    throw FormatError(std::string("invalid checkpoint header JSON: ") + e.what());
  }

  Checkpoint ckpt;
  from_json_into(header.at("config"), ckpt.config);
  ckpt.epoch = header.at("epoch").get<int>();
  ckpt.adam_t = header.at("adam_t").get<std::int64_t>();
  const auto& js = header.at("stats");
  ckpt.stats.u_p = js.at("u_p").get<float>();
  ckpt.stats.d_p = js.at("d_p").get<float>();
  ckpt.stats.u_f = js.at("u_f").get<float>();
  ckpt.stats.d_f = js.at("d_f").get<float>();
  ckpt.stats.fused_min = js.at("fused_min").get<float>();
  ckpt.stats.fitted = js.at("fitted").get<bool>();

  ckpt.model = ModelParams::init(ckpt.config.arch, ckpt.config.memory_sizes, ckpt.config.seed);

  // Index the expected destinations, then stream the payload in header order.
  std::unordered_map<std::string, Tensor*> dst;
  const auto named = ckpt.model.named_parameters();
  for (const auto& [name, v] : named) dst["param:" + name] = &v->value;
  for (const auto& [name, t] : ckpt.model.named_buffers()) dst["buffer:" + name] = t;
  ckpt.adam_m.clear();
  ckpt.adam_v.clear();
  for (const auto& [name, v] : named) {
    ckpt.adam_m.emplace_back(v->value.shape());
    ckpt.adam_v.emplace_back(v->value.shape());
  }
  for (std::size_t i = 0; i < named.size(); ++i) {
    dst["adam_m:" + named[i].first] = &ckpt.adam_m[i];
    dst["adam_v:" + named[i].first] = &ckpt.adam_v[i];
  }

  for (const auto& jt : header.at("tensors")) {
    const std::string name = jt.at("name").get<std::string>();
    const std::vector<int> shape = jt.at("shape").get<std::vector<int>>();
    auto it = dst.find(name);
    if (it == dst.end())
      throw FormatError("checkpoint tensor '" + name + "' does not match the architecture");
    if (it->second->shape() != shape)
      throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_to_string(shape) +
                        ", expected " + it->second->shape_str());
    f.read(reinterpret_cast<char*>(it->second->data()),
           static_cast<std::streamsize>(it->second->numel() * sizeof(float)));
    if (!f) throw FormatError("truncated checkpoint payload at tensor '" + name + "'");
  }
  return ckpt;
}

}  // namespace vad
