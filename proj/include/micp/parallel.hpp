// micp — range-sensor-to-mesh registration
// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace micp {

// Worker count used by all parallel loops. Resolution order:
// set_worker_count(n > 0)  >  MICP_WORKERS env var  >  hardware default.
// All parallel code writes results to fixed slots and reduces in fixed
// order, so outputs do not depend on this value.
int worker_count();
void set_worker_count(int n);  // n <= 0 restores automatic selection

}  // namespace micp
