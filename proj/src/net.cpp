#include "vad/net.hpp"

#include <cmath>

#include "vad/common.hpp"

namespace vad {

const char* to_string(SkipVariant v) {
  switch (v) {
    case SkipVariant::kFull: return "full";
    case SkipVariant::kNoSC: return "nosc";
    case SkipVariant::kSC2: return "sc2";
    case SkipVariant::kSC1: return "sc1";
  }
  return "?";
}
const char* to_string(FinalActivation a) {
  return a == FinalActivation::kSigmoid ? "sigmoid" : "identity";
}
SkipVariant skip_variant_from_string(const std::string& s) {
  if (s == "full") return SkipVariant::kFull;
  if (s == "nosc") return SkipVariant::kNoSC;
  if (s == "sc2") return SkipVariant::kSC2;
  if (s == "sc1") return SkipVariant::kSC1;
  throw ConfigError("unknown skip_variant '" + s + "'");
}
FinalActivation final_activation_from_string(const std::string& s) {
  if (s == "sigmoid") return FinalActivation::kSigmoid;
  if (s == "identity") return FinalActivation::kIdentity;
  throw ConfigError("unknown final_activation '" + s + "'");
}

void ArchConfig::validate() const {
  if (levels < 2) throw ConfigError("arch.levels: must be >= 2");
  if (static_cast<int>(channels.size()) != levels)
    throw ConfigError("arch.channels: need one channel count per level");
  for (int c : channels)
    if (c < 1) throw ConfigError("arch.channels: must be positive");
  if (kernel != 3) throw ConfigError("arch.kernel: fixed to 3");
  if (input_size < (1 << (levels - 1)) || input_size % (1 << (levels - 1)) != 0)
    throw ConfigError("arch.input_size: must be divisible by 2^(levels-1)");
  if (!appearance_enabled && !motion_enabled)
    throw ConfigError("arch: at least one stream must be enabled");
  if (ffrp_enabled && !motion_enabled)
    throw ConfigError("arch.ffrp_enabled: requires the motion stream");
  if (!appearance_enabled && skip_variant != SkipVariant::kNoSC)
    throw ConfigError("arch.skip_variant: skips require the appearance stream");
  if (!appearance_enabled && mgsm_enabled)
    throw ConfigError("arch.mgsm_enabled: requires the appearance stream");
  if (align_enabled && !(appearance_enabled && motion_enabled))
    throw ConfigError("arch.align_enabled: requires both streams");
  if (in_channels_appearance < 1 && appearance_enabled)
    throw ConfigError("arch.in_channels_appearance: must be >= 1");
  if (in_channels_motion < 1 && motion_enabled)
    throw ConfigError("arch.in_channels_motion: must be >= 1");
  if (out_channels < 1) throw ConfigError("arch.out_channels: must be >= 1");
}

bool ArchConfig::skip_used(int l) const {
  if (!appearance_enabled) return false;
  switch (skip_variant) {
    case SkipVariant::kFull: return l >= 0 && l < levels - 1;
    case SkipVariant::kNoSC: return false;
    case SkipVariant::kSC1: return l == 0;
    case SkipVariant::kSC2: return l == 0 || l == 1;
  }
  return false;
}

namespace {

Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const float bound = 1.f / std::sqrt(static_cast<float>(fan_in));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

ConvParam make_conv(int in_ch, int out_ch, int k, Rng& rng) {
  ConvParam p;
  p.w = make_leaf(uniform_init({out_ch, in_ch, k, k}, in_ch * k * k, rng), true);
  p.b = make_leaf(Tensor({out_ch}), true);
  return p;
}

ConvParam make_tconv(int in_ch, int out_ch, int k, Rng& rng) {
  ConvParam p;
  p.w = make_leaf(uniform_init({in_ch, out_ch, k, k}, in_ch * k * k, rng), true);
  p.b = make_leaf(Tensor({out_ch}), true);
  return p;
}

BnParam make_bn(int ch) {
  BnParam p;
  p.gamma = make_leaf(Tensor::full({ch}, 1.f), true);
  p.beta = make_leaf(Tensor({ch}), true);
  p.run_mean = Tensor({ch});
  p.run_var = Tensor::full({ch}, 1.f);
  return p;
}

void check_input(const Tensor& t, int ch, int size, const char* what) {
  if (t.ndim() != 4 || t.dim(1) != ch || t.dim(2) != size || t.dim(3) != size)
    throw ShapeError(std::string(what) + ": expected (B," + std::to_string(ch) + "," +
                     std::to_string(size) + "," + std::to_string(size) + "), got " + t.shape_str());
}

}  // namespace

ModelParams ModelParams::init(const ArchConfig& arch, const std::vector<int>& memory_sizes,
                              std::uint64_t seed) {
  arch.validate();
  if (arch.mgsm_enabled &&
      static_cast<int>(memory_sizes.size()) != arch.skip_levels())
    throw ConfigError("memory_sizes: need one entry per skip level (" +
                      std::to_string(arch.skip_levels()) + ")");

  Rng rng(Rng::mix(seed, 0xC0FFEEULL));
  ModelParams p;
  p.arch = arch;
  p.memory_sizes = memory_sizes;
  const int k = arch.kernel;
  const auto& ch = arch.channels;

  if (arch.appearance_enabled)
    for (int l = 0; l < arch.levels; ++l) {
      EncoderLevel lev;
      lev.conv = make_conv(l == 0 ? arch.in_channels_appearance : ch[static_cast<std::size_t>(l - 1)],
                           ch[static_cast<std::size_t>(l)], k, rng);
      lev.bn = make_bn(ch[static_cast<std::size_t>(l)]);
      p.enc_app.push_back(std::move(lev));
    }
  if (arch.motion_enabled)
    for (int l = 0; l < arch.levels; ++l) {
      EncoderLevel lev;
      lev.conv = make_conv(l == 0 ? arch.in_channels_motion : ch[static_cast<std::size_t>(l - 1)],
                           ch[static_cast<std::size_t>(l)], k, rng);
      lev.bn = make_bn(ch[static_cast<std::size_t>(l)]);
      p.enc_mot.push_back(std::move(lev));
    }

  for (int l = arch.levels - 2; l >= 0; --l) {
    DecoderLevel lev;
    lev.up = make_tconv(ch[static_cast<std::size_t>(l + 1)], ch[static_cast<std::size_t>(l)], k, rng);
    const int conv_in =
        ch[static_cast<std::size_t>(l)] + (arch.skip_used(l) ? ch[static_cast<std::size_t>(l)] : 0);
    lev.conv = make_conv(conv_in, ch[static_cast<std::size_t>(l)], k, rng);
    lev.bn = make_bn(ch[static_cast<std::size_t>(l)]);
    p.dec.push_back(std::move(lev));
  }
  p.head = make_conv(ch[0], arch.out_channels, k, rng);

  if (arch.mgsm_enabled)
    for (int l = 0; l < arch.skip_levels(); ++l) {
      MgsmLevel lev;
      const int dim = arch.feature_dim(l);
      const int n = memory_sizes[static_cast<std::size_t>(l)];
      if (n < 1) throw ConfigError("memory_sizes: item count must be >= 1");
      Tensor items({n, dim});
      const float stddev = 1.f / std::sqrt(static_cast<float>(dim));
      for (std::int64_t i = 0; i < items.numel(); ++i) items[i] = rng.normal(0.f, stddev);
      lev.bank = make_leaf(std::move(items), true);
      lev.bn = make_bn(arch.channels[static_cast<std::size_t>(l)]);
      p.mgsm.push_back(std::move(lev));
    }

  return p;
}

std::vector<Var> ModelParams::parameters() const {
  std::vector<Var> out;
  for (const auto& [name, v] : named_parameters()) out.push_back(v);
  return out;
}

std::vector<std::pair<std::string, Var>> ModelParams::named_parameters() const {
  std::vector<std::pair<std::string, Var>> out;
  auto add_enc = [&](const char* prefix, const std::vector<EncoderLevel>& enc) {
    for (std::size_t l = 0; l < enc.size(); ++l) {
      const std::string base = std::string(prefix) + "." + std::to_string(l);
      out.push_back({base + ".conv.w", enc[l].conv.w});
      out.push_back({base + ".conv.b", enc[l].conv.b});
      out.push_back({base + ".bn.gamma", enc[l].bn.gamma});
      out.push_back({base + ".bn.beta", enc[l].bn.beta});
    }
  };
  add_enc("enc_app", enc_app);
  add_enc("enc_mot", enc_mot);
  for (std::size_t l = 0; l < dec.size(); ++l) {
    const std::string base = "dec." + std::to_string(l);
    out.push_back({base + ".up.w", dec[l].up.w});
    out.push_back({base + ".up.b", dec[l].up.b});
    out.push_back({base + ".conv.w", dec[l].conv.w});
    out.push_back({base + ".conv.b", dec[l].conv.b});
    out.push_back({base + ".bn.gamma", dec[l].bn.gamma});
    out.push_back({base + ".bn.beta", dec[l].bn.beta});
  }
  out.push_back({"head.w", head.w});
  out.push_back({"head.b", head.b});
  for (std::size_t l = 0; l < mgsm.size(); ++l) {
    const std::string base = "mgsm." + std::to_string(l);
    out.push_back({base + ".bank", mgsm[l].bank});
    out.push_back({base + ".bn.gamma", mgsm[l].bn.gamma});
    out.push_back({base + ".bn.beta", mgsm[l].bn.beta});
  }
  return out;
}

std::vector<std::pair<std::string, Tensor*>> ModelParams::named_buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  auto add_enc = [&](const char* prefix, std::vector<EncoderLevel>& enc) {
    for (std::size_t l = 0; l < enc.size(); ++l) {
      const std::string base = std::string(prefix) + "." + std::to_string(l);
      out.push_back({base + ".bn.run_mean", &enc[l].bn.run_mean});
      out.push_back({base + ".bn.run_var", &enc[l].bn.run_var});
    }
  };
  add_enc("enc_app", enc_app);
  add_enc("enc_mot", enc_mot);
  for (std::size_t l = 0; l < dec.size(); ++l) {
    const std::string base = "dec." + std::to_string(l);
    out.push_back({base + ".bn.run_mean", &dec[l].bn.run_mean});
    out.push_back({base + ".bn.run_var", &dec[l].bn.run_var});
  }
  for (std::size_t l = 0; l < mgsm.size(); ++l) {
    const std::string base = "mgsm." + std::to_string(l);
    out.push_back({base + ".bn.run_mean", &mgsm[l].bn.run_mean});
    out.push_back({base + ".bn.run_var", &mgsm[l].bn.run_var});
  }
  return out;
}

std::int64_t ModelParams::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, v] : named_parameters()) n += v->value.numel();
  return n;
}

ForwardResult forward(ModelParams& p, const Tensor& appearance, const Tensor& flows,
                      bool training) {
  const ArchConfig& arch = p.arch;
  ForwardResult res;

  std::vector<Var> skips;  // encoder levels 0..L-2
  Var bottleneck_app, bottleneck_mot;

  if (arch.appearance_enabled) {
    check_input(appearance, arch.in_channels_appearance, arch.input_size, "appearance input");
    Var x = make_leaf(appearance, false);
    for (int l = 0; l < arch.levels; ++l) {
      auto& lev = p.enc_app[static_cast<std::size_t>(l)];
      if (l > 0) x = max_pool2(x);
      x = conv2d(x, lev.conv.w, lev.conv.b, 1, arch.kernel / 2);
      x = batch_norm2d(x, lev.bn.gamma, lev.bn.beta, lev.bn.run_mean, lev.bn.run_var, training);
      x = relu(x);
      if (l < arch.levels - 1) skips.push_back(x);
    }
    bottleneck_app = x;
  }

  if (arch.motion_enabled) {
    check_input(flows, arch.in_channels_motion, arch.input_size, "flow input");
    Var x = make_leaf(flows, false);
    for (int l = 0; l < arch.levels; ++l) {
      auto& lev = p.enc_mot[static_cast<std::size_t>(l)];
      x = conv2d(x, lev.conv.w, lev.conv.b, l == 0 ? 1 : 2, arch.kernel / 2);
      x = batch_norm2d(x, lev.bn.gamma, lev.bn.beta, lev.bn.run_mean, lev.bn.run_var, training);
      x = relu(x);
    }
    bottleneck_mot = x;
  }

  res.f_a = bottleneck_app;
  res.f_m = bottleneck_mot;

  // Suppress the skip features through the per-level memory banks.
  std::vector<Var> decoder_skips(skips.size());
  if (arch.mgsm_enabled) {
    for (std::size_t l = 0; l < skips.size(); ++l) {
      auto& mg = p.mgsm[l];
      Var q = flatten_rows(skips[l]);
      res.queries.push_back(q);
      Var att = softmax_rows(cosine_rows(q, mg.bank));
      Var lambda = row_max(att);
      res.suppressors.push_back(lambda);
      Var normed = batch_norm2d(skips[l], mg.bn.gamma, mg.bn.beta, mg.bn.run_mean, mg.bn.run_var,
                                training);
      decoder_skips[l] = relu(scale_rows(normed, lambda));
    }
  } else {
    decoder_skips = skips;
  }

  Var x = arch.ffrp_enabled ? bottleneck_mot : bottleneck_app;
  if (!x) throw ConfigError("forward: no bottleneck feature (check stream flags)");

  for (std::size_t di = 0; di < p.dec.size(); ++di) {
    const int l = arch.levels - 2 - static_cast<int>(di);  // encoder level this stage restores
    auto& lev = p.dec[di];
    x = conv_transpose2d(x, lev.up.w, lev.up.b, 2, arch.kernel / 2, 1);
    if (arch.skip_used(l)) {
      if (static_cast<std::size_t>(l) >= decoder_skips.size() || !decoder_skips[static_cast<std::size_t>(l)])
        throw ConfigError("forward: skip variant requires level " + std::to_string(l + 1) +
                          " skip, which is missing");
      x = concat_channels(x, decoder_skips[static_cast<std::size_t>(l)]);
    }
    x = conv2d(x, lev.conv.w, lev.conv.b, 1, arch.kernel / 2);
    x = batch_norm2d(x, lev.bn.gamma, lev.bn.beta, lev.bn.run_mean, lev.bn.run_var, training);
    x = relu(x);
  }

  x = conv2d(x, p.head.w, p.head.b, 1, arch.kernel / 2);
  res.prediction = arch.final_activation == FinalActivation::kSigmoid ? sigmoid(x) : x;
  return res;
}

}  // namespace vad
