// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#include "micp/parallel.hpp"

#include <omp.h>

#include <atomic>
#include <cstdlib>

namespace micp {

namespace {
std::atomic<int> g_workers{0};
}

int worker_count() {
  const int forced = g_workers.load(std::memory_order_relaxed);
  if (forced > 0) return forced;
  if (const char* env = std::getenv("MICP_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return omp_get_max_threads();
}

void set_worker_count(int n) { g_workers.store(n > 0 ? n : 0, std::memory_order_relaxed); }

}  // namespace micp
