#include "vad/threads.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>

namespace vad {

int worker_threads() {
  static const int n = [] {
    if (const char* env = std::getenv("MAMC_VAD_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return static_cast<int>(std::clamp(hw, 1u, 8u));
  }();
  return n;
}

}  // namespace vad
