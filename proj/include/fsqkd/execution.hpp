#pragma once

namespace fsqkd {

/// Selects the OpenMP kernel or its serial reference. Both produce bit-identical results.
enum class Execution { kSerial, kParallel };

}  // namespace fsqkd
