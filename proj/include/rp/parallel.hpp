#pragma once

namespace rp {

/// Selects the OpenMP kernel or its serial reference. Both produce bit-identical results.
enum class Exec { kSerial, kParallel };

/// Caps the OpenMP thread count for the whole process (0 = all available cores).
void set_workers(int workers);
int workers();

}  // namespace rp
