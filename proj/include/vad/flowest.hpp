#pragma once

#include <cstdint>
#include <vector>

#include "vad/common.hpp"

namespace vad {

// Dense optical flow by exhaustive block matching; stands in for a learned
// flow network when ground-truth flow is not available.

struct BlockMatchParams {
  int block_size = 7;     // odd, >= 3
  int search_radius = 7;  // >= 1
  int stride = 1;         // >= 1

  void validate() const {
    if (block_size < 3 || block_size % 2 == 0)
      throw ConfigError("block_size: must be odd and >= 3");
    if (search_radius < 1) throw ConfigError("search_radius: must be >= 1");
    if (stride < 1) throw ConfigError("stride: must be >= 1");
  }
};

struct FlowField {
  int h = 0, w = 0;
  std::vector<float> values;       // h*w*2, (u,v)
  std::vector<std::uint8_t> valid; // h*w

  float u(int y, int x) const { return values[(static_cast<std::size_t>(y) * w + x) * 2 + 0]; }
  float v(int y, int x) const { return values[(static_cast<std::size_t>(y) * w + x) * 2 + 1]; }
  bool is_valid(int y, int x) const { return valid[static_cast<std::size_t>(y) * w + x] != 0; }
};

// Flow from prev to next. For each block center the integer displacement
// minimizing the sum of absolute differences over the search window; ties
// broken by smaller displacement magnitude, then by row-major scan order of
// the window. Centers whose window exits the frame are invalid and zero.
FlowField estimate_flow(const float* prev, const float* next, int h, int w,
                        const BlockMatchParams& params);

}  // namespace vad
