#pragma once

namespace vad {

// Worker thread cap for parallel regions. Reads MAMC_VAD_THREADS once; falls
// back to the hardware concurrency (at most 8). Always >= 1.
int worker_threads();

}  // namespace vad
