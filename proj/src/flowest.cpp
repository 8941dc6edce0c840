#include "vad/flowest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vad/threads.hpp"

namespace vad {

FlowField estimate_flow(const float* prev, const float* next, int h, int w,
                        const BlockMatchParams& params) {
  params.validate();
  if (h < 1 || w < 1) throw ShapeError("estimate_flow: empty frame");

  FlowField out;
  out.h = h;
  out.w = w;
  out.values.assign(static_cast<std::size_t>(h) * w * 2, 0.f);
  out.valid.assign(static_cast<std::size_t>(h) * w, 0);

  const int hb = params.block_size / 2;
  const int r = params.search_radius;
  const int margin = hb + r;  // every candidate block must stay inside the frame

  const int nt = worker_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1)
  for (int cy = margin; cy < h - margin; cy += params.stride) {
    for (int cx = margin; cx < w - margin; cx += params.stride) {
      float best_cost = std::numeric_limits<float>::infinity();
      int best_du = 0, best_dv = 0, best_mag = std::numeric_limits<int>::max();
      for (int dv = -r; dv <= r; ++dv) {
        for (int du = -r; du <= r; ++du) {
          float cost = 0.f;
          for (int by = -hb; by <= hb; ++by) {
            const float* p = prev + (cy + by) * w + cx;
            const float* q = next + (cy + dv + by) * w + cx + du;
            for (int bx = -hb; bx <= hb; ++bx) cost += std::abs(p[bx] - q[bx]);
          }
          const int mag = du * du + dv * dv;
          if (cost < best_cost || (cost == best_cost && mag < best_mag)) {
            best_cost = cost;
            best_du = du;
            best_dv = dv;
            best_mag = mag;
          }
        }
      }
      out.values[(static_cast<std::size_t>(cy) * w + cx) * 2 + 0] = static_cast<float>(best_du);
      out.values[(static_cast<std::size_t>(cy) * w + cx) * 2 + 1] = static_cast<float>(best_dv);
      out.valid[static_cast<std::size_t>(cy) * w + cx] = 1;
    }
  }

  if (params.stride > 1) {
    // Fill off-grid pixels from the nearest computed center.
    auto snap = [&](int v, int lo, int hi) {
      if (hi < lo) return lo;
      int g = lo + ((v - lo) + params.stride / 2) / params.stride * params.stride;
      return std::clamp(g, lo, hi);
    };
    const int y_hi = margin + (h - 2 * margin - 1) / params.stride * params.stride;
    const int x_hi = margin + (w - 2 * margin - 1) / params.stride * params.stride;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (y >= margin && y < h - margin && x >= margin && x < w - margin &&
            (y - margin) % params.stride == 0 && (x - margin) % params.stride == 0)
          continue;
        if (h - 2 * margin <= 0 || w - 2 * margin <= 0) continue;
        const int sy = snap(std::clamp(y, margin, h - margin - 1), margin, y_hi);
        const int sx = snap(std::clamp(x, margin, w - margin - 1), margin, x_hi);
        // Border pixels stay invalid/zero; only interior off-grid pixels inherit.
        if (y < margin || y >= h - margin || x < margin || x >= w - margin) continue;
        out.values[(static_cast<std::size_t>(y) * w + x) * 2 + 0] = out.u(sy, sx);
        out.values[(static_cast<std::size_t>(y) * w + x) * 2 + 1] = out.v(sy, sx);
        out.valid[static_cast<std::size_t>(y) * w + x] = out.valid[static_cast<std::size_t>(sy) * w + sx];
      }
  }

  return out;
}

}  // namespace vad
