#pragma once

#include <string>
#include <vector>

#include "vad/autograd.hpp"
#include "vad/rng.hpp"

namespace vad {

enum class SkipVariant { kFull, kNoSC, kSC2, kSC1 };
enum class FinalActivation { kSigmoid, kIdentity };

const char* to_string(SkipVariant v);
const char* to_string(FinalActivation a);
SkipVariant skip_variant_from_string(const std::string& s);
FinalActivation final_activation_from_string(const std::string& s);

// Two-stream encoder / single decoder. The appearance encoder keeps level 1
// at input resolution and max-pools before levels 2..L; the motion encoder
// uses stride-2 convolutions instead; the decoder mirrors with stride-2
// transposed convolutions. All kernels are 3x3.
struct ArchConfig {
  int levels = 4;
  std::vector<int> channels = {64, 128, 256, 512};
  int kernel = 3;  // fixed
  int in_channels_appearance = 4;  // 4 grayscale frames
  int in_channels_motion = 8;      // 4 flow fields x 2 components
  int out_channels = 1;
  SkipVariant skip_variant = SkipVariant::kFull;
  bool mgsm_enabled = true;
  bool ffrp_enabled = true;   // feed f_m to the decoder instead of f_a
  bool align_enabled = true;
  bool appearance_enabled = true;
  bool motion_enabled = true;
  int input_size = 32;
  FinalActivation final_activation = FinalActivation::kSigmoid;

  void validate() const;
  bool motion_only() const { return motion_enabled && !appearance_enabled; }
  int skip_levels() const { return levels - 1; }
  // 0-based encoder level l in [0, levels-2]; true when the decoder consumes
  // that skip under the configured variant.
  bool skip_used(int l) const;
  int level_size(int l) const { return input_size >> l; }
  // Flattened C*H*W at encoder level l; the memory bank dimension.
  int feature_dim(int l) const {
    return channels[static_cast<std::size_t>(l)] * level_size(l) * level_size(l);
  }
};

struct ConvParam {
  Var w, b;
};
struct BnParam {
  Var gamma, beta;
  Tensor run_mean, run_var;
};
struct EncoderLevel {
  ConvParam conv;
  BnParam bn;
};
struct DecoderLevel {
  ConvParam up;    // stride-2 transposed conv
  ConvParam conv;  // 3x3 conv after optional skip concat
  BnParam bn;
};
struct MgsmLevel {
  Var bank;  // (N, D)
  BnParam bn;
};

struct ModelParams {
  ArchConfig arch;
  std::vector<int> memory_sizes;

  std::vector<EncoderLevel> enc_app;
  std::vector<EncoderLevel> enc_mot;
  std::vector<DecoderLevel> dec;
  ConvParam head;
  std::vector<MgsmLevel> mgsm;

  static ModelParams init(const ArchConfig& arch, const std::vector<int>& memory_sizes,
                          std::uint64_t seed);

  std::vector<Var> parameters() const;
  // Deterministic (name, tensor) registry used by the checkpoint format.
  std::vector<std::pair<std::string, Var>> named_parameters() const;
  std::vector<std::pair<std::string, Tensor*>> named_buffers();
  std::int64_t parameter_count() const;
};

struct ForwardResult {
  Var prediction;                // (B, out_channels, S, S)
  Var f_a;                       // appearance bottleneck; null if stream disabled
  Var f_m;                       // motion bottleneck; null if stream disabled
  std::vector<Var> queries;      // flattened skip features, one per MGSM level
  std::vector<Var> suppressors;  // lambda per level, (B)
};

// appearance: (B, in_channels_appearance, S, S); flows: (B, in_channels_motion,
// S, S). Either may be an empty tensor when its stream is disabled.
ForwardResult forward(ModelParams& params, const Tensor& appearance, const Tensor& flows,
                      bool training);

}  // namespace vad
