#pragma once

#include <vector>

#include "vad/flowest.hpp"
#include "vad/synthdata.hpp"

namespace vad {

// Spatio-temporal cubes: per-object stacks of 5 co-located appearance patches
// (frames t-4..t) and the 4 flow patches between them, resized to 32x32. The
// first 4 appearance slices are model input; the 5th is the prediction target.

constexpr int kStcFrames = 5;
constexpr int kStcFlows = 4;
constexpr int kStcSize = 32;

struct Stc {
  // kStcFrames x 32 x 32, values in [0,1].
  std::vector<float> appearance;
  // kStcFlows x 32 x 32 x 2, vectors rescaled into resized-pixel units.
  std::vector<float> flow;
  int object_id = 0;
  int frame_index = 0;
  Box box;
  bool is_anomalous = false;
  bool clamped = false;  // box fell partly outside the frame and was clamped
};

enum class BoxMode { kGroundTruth, kBgSubtract };
enum class FlowSource { kGroundTruth, kEstimated };

// Ground-truth mode passes the stored boxes through. Background subtraction
// thresholds |frame - median background| > tau, takes 8-connected components
// of at least min_area pixels, and returns their bounding boxes.
std::vector<std::vector<Box>> extract_boxes(const VideoSequence& seq, BoxMode mode,
                                            float tau = 0.1f, int min_area = 16);

// Corner-aligned bilinear resize of a single-channel patch.
std::vector<float> resize_bilinear(const float* src, int h, int w, int out_h, int out_w);

// Crops the same region from frames t-4..t and flows t-4..t-1 of `seq`,
// resizes to 32x32, and rescales flow vectors by (32/w, 32/h). `flows` points
// at (clip_len-1)*h*w*2 floats laid out like VideoSequence::gt_flows (pass
// seq.gt_flows for ground truth or an estimated buffer of the same layout).
Stc build_stc(const VideoSequence& seq, const Box& box, int t, const float* flows);

// Estimates all frame-to-frame flows of a sequence with block matching,
// returning a buffer laid out like VideoSequence::gt_flows.
std::vector<float> estimate_sequence_flows(const VideoSequence& seq,
                                           const BlockMatchParams& params);

// All STCs of a sequence for t in [4, clip_len).
std::vector<Stc> build_sequence_stcs(const VideoSequence& seq, BoxMode box_mode, FlowSource src,
                                     const BlockMatchParams* bm = nullptr);

// Convenience over a whole dataset.
std::vector<Stc> build_dataset_stcs(const std::vector<VideoSequence>& seqs, BoxMode box_mode,
                                    FlowSource src, const BlockMatchParams* bm = nullptr);

}  // namespace vad
