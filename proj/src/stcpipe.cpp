#include "vad/stcpipe.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace vad {

std::vector<float> resize_bilinear(const float* src, int h, int w, int out_h, int out_w) {
  if (h < 1 || w < 1 || out_h < 1 || out_w < 1)
    throw ShapeError("resize_bilinear: degenerate size");
  std::vector<float> out(static_cast<std::size_t>(out_h) * out_w);
  // Corner-aligned sampling: output corners map exactly onto input corners.
  const float sy = out_h > 1 ? static_cast<float>(h - 1) / (out_h - 1) : 0.f;
  const float sx = out_w > 1 ? static_cast<float>(w - 1) / (out_w - 1) : 0.f;
  for (int oy = 0; oy < out_h; ++oy) {
    const float fy = oy * sy;
    const int y0 = std::min(static_cast<int>(fy), h - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const float wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      const float fx = ox * sx;
      const int x0 = std::min(static_cast<int>(fx), w - 1);
      const int x1 = std::min(x0 + 1, w - 1);
      const float wx = fx - x0;
      const float a = src[y0 * w + x0], b = src[y0 * w + x1];
      const float c = src[y1 * w + x0], d = src[y1 * w + x1];
      out[static_cast<std::size_t>(oy) * out_w + ox] =
          (1 - wy) * ((1 - wx) * a + wx * b) + wy * ((1 - wx) * c + wx * d);
    }
  }
  return out;
}

std::vector<std::vector<Box>> extract_boxes(const VideoSequence& seq, BoxMode mode, float tau,
                                            int min_area) {
  if (mode == BoxMode::kGroundTruth) return seq.boxes;

  const int h = seq.h, w = seq.w;
  // Per-pixel median over the clip as the background model.
  std::vector<float> background(static_cast<std::size_t>(h) * w);
  std::vector<float> column(static_cast<std::size_t>(seq.clip_len));
  for (int i = 0; i < h * w; ++i) {
    for (int t = 0; t < seq.clip_len; ++t) column[static_cast<std::size_t>(t)] = seq.frame(t)[i];
    std::nth_element(column.begin(), column.begin() + seq.clip_len / 2, column.end());
    background[static_cast<std::size_t>(i)] = column[static_cast<std::size_t>(seq.clip_len / 2)];
  }

  std::vector<std::vector<Box>> out(static_cast<std::size_t>(seq.clip_len));
  std::vector<std::uint8_t> fg(static_cast<std::size_t>(h) * w);
  std::vector<int> comp(static_cast<std::size_t>(h) * w);
  for (int t = 0; t < seq.clip_len; ++t) {
    const float* frame = seq.frame(t);
    for (int i = 0; i < h * w; ++i)
      fg[static_cast<std::size_t>(i)] =
          std::abs(frame[i] - background[static_cast<std::size_t>(i)]) > tau ? 1 : 0;
    std::fill(comp.begin(), comp.end(), -1);
    int next_id = 0;
    for (int start = 0; start < h * w; ++start) {
      if (!fg[static_cast<std::size_t>(start)] || comp[static_cast<std::size_t>(start)] >= 0)
        continue;
      // 8-connected flood fill.
      std::deque<int> queue{start};
      comp[static_cast<std::size_t>(start)] = next_id;
      int min_x = w, max_x = -1, min_y = h, max_y = -1, area = 0;
      while (!queue.empty()) {
        const int i = queue.front();
        queue.pop_front();
        const int y = i / w, x = i % w;
        ++area;
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (!dy && !dx) continue;
            const int ny = y + dy, nx = x + dx;
            if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
            const int ni = ny * w + nx;
            if (fg[static_cast<std::size_t>(ni)] && comp[static_cast<std::size_t>(ni)] < 0) {
              comp[static_cast<std::size_t>(ni)] = next_id;
              queue.push_back(ni);
            }
          }
      }
      if (area >= min_area)
        out[static_cast<std::size_t>(t)].push_back(
            {next_id, min_x, min_y, max_x - min_x + 1, max_y - min_y + 1, false});
      ++next_id;
    }
  }
  return out;
}

Stc build_stc(const VideoSequence& seq, const Box& box, int t, const float* flows) {
  if (t < kStcFrames - 1)
    throw ConfigError("build_stc: frame index " + std::to_string(t) + " needs at least " +
                      std::to_string(kStcFrames - 1) + " preceding frames");
  if (t >= seq.clip_len) throw ConfigError("build_stc: frame index beyond clip");

  Stc stc;
  stc.object_id = box.object_id;
  stc.frame_index = t;
  stc.box = box;
  stc.is_anomalous = box.is_anomalous;

  // Clamp the region to the frame; flag when that changed anything.
  int x0 = box.x, y0 = box.y, x1 = box.x + box.w, y1 = box.y + box.h;
  const int cx0 = std::clamp(x0, 0, seq.w - 1);
  const int cy0 = std::clamp(y0, 0, seq.h - 1);
  const int cx1 = std::clamp(x1, cx0 + 1, seq.w);
  const int cy1 = std::clamp(y1, cy0 + 1, seq.h);
  stc.clamped = (cx0 != x0 || cy0 != y0 || cx1 != x1 || cy1 != y1);
  const int bw = cx1 - cx0, bh = cy1 - cy0;

  stc.appearance.resize(static_cast<std::size_t>(kStcFrames) * kStcSize * kStcSize);
  std::vector<float> patch(static_cast<std::size_t>(bh) * bw);
  for (int k = 0; k < kStcFrames; ++k) {
    const float* frame = seq.frame(t - (kStcFrames - 1) + k);
    for (int y = 0; y < bh; ++y)
      for (int x = 0; x < bw; ++x)
        patch[static_cast<std::size_t>(y) * bw + x] = frame[(cy0 + y) * seq.w + cx0 + x];
    const auto resized = resize_bilinear(patch.data(), bh, bw, kStcSize, kStcSize);
    std::copy(resized.begin(), resized.end(),
              stc.appearance.begin() + static_cast<std::size_t>(k) * kStcSize * kStcSize);
  }

  // Flow vectors rescale with the spatial factor so motion stays in
  // resized-pixel units.
  const float fx = static_cast<float>(kStcSize) / bw;
  const float fy = static_cast<float>(kStcSize) / bh;
  stc.flow.resize(static_cast<std::size_t>(kStcFlows) * kStcSize * kStcSize * 2);
  std::vector<float> up(static_cast<std::size_t>(bh) * bw), vp(static_cast<std::size_t>(bh) * bw);
  for (int k = 0; k < kStcFlows; ++k) {
    const float* fl = flows + static_cast<std::size_t>(t - kStcFlows + k) * seq.h * seq.w * 2;
    for (int y = 0; y < bh; ++y)
      for (int x = 0; x < bw; ++x) {
        up[static_cast<std::size_t>(y) * bw + x] = fl[((cy0 + y) * seq.w + cx0 + x) * 2 + 0];
        vp[static_cast<std::size_t>(y) * bw + x] = fl[((cy0 + y) * seq.w + cx0 + x) * 2 + 1];
      }
    const auto ru = resize_bilinear(up.data(), bh, bw, kStcSize, kStcSize);
    const auto rv = resize_bilinear(vp.data(), bh, bw, kStcSize, kStcSize);
    float* dst = stc.flow.data() + static_cast<std::size_t>(k) * kStcSize * kStcSize * 2;
    for (int i = 0; i < kStcSize * kStcSize; ++i) {
      dst[i * 2 + 0] = ru[static_cast<std::size_t>(i)] * fx;
      dst[i * 2 + 1] = rv[static_cast<std::size_t>(i)] * fy;
    }
  }
  return stc;
}

std::vector<float> estimate_sequence_flows(const VideoSequence& seq,
                                           const BlockMatchParams& params) {
  std::vector<float> out(static_cast<std::size_t>(seq.clip_len - 1) * seq.h * seq.w * 2, 0.f);
  for (int t = 0; t + 1 < seq.clip_len; ++t) {
    const FlowField f = estimate_flow(seq.frame(t), seq.frame(t + 1), seq.h, seq.w, params);
    std::copy(f.values.begin(), f.values.end(),
              out.begin() + static_cast<std::size_t>(t) * seq.h * seq.w * 2);
  }
  return out;
}

std::vector<Stc> build_sequence_stcs(const VideoSequence& seq, BoxMode box_mode, FlowSource src,
                                     const BlockMatchParams* bm) {
  const auto boxes = extract_boxes(seq, box_mode);
  std::vector<float> estimated;
  const float* flows = seq.gt_flows.data();
  if (src == FlowSource::kEstimated) {
    BlockMatchParams params = bm ? *bm : BlockMatchParams{};
    estimated = estimate_sequence_flows(seq, params);
    flows = estimated.data();
  }
  std::vector<Stc> out;
  for (int t = kStcFrames - 1; t < seq.clip_len; ++t)
    for (const auto& box : boxes[static_cast<std::size_t>(t)])
      out.push_back(build_stc(seq, box, t, flows));
  return out;
}

std::vector<Stc> build_dataset_stcs(const std::vector<VideoSequence>& seqs, BoxMode box_mode,
                                    FlowSource src, const BlockMatchParams* bm) {
  std::vector<Stc> out;
  for (const auto& seq : seqs) {
    auto stcs = build_sequence_stcs(seq, box_mode, src, bm);
    out.insert(out.end(), std::make_move_iterator(stcs.begin()),
               std::make_move_iterator(stcs.end()));
  }
  return out;
}

}  // namespace vad
