#pragma once

// Block-level detection kernel.
//
// A block is a run of consecutive slots split into channel bins of length dt
// (constant transmittance within a bin). Each bin is simulated from its own
// derived random stream, so bins are independent work items: the parallel path
// generates the raw clicks of a chunk of bins with OpenMP, then dead time and
// sifting run over the bins in order. The serial path runs the same per-bin
// function in a plain loop and yields bit-identical results.
//
// Per-slot photon statistics use Poisson splitting: the number of photons that
// would be registered in each (detector, window) cell is independent Poisson,
// so only slots with at least one registered photon are visited (geometric
// skipping plus thinning), and the emitted photon number of a visited slot is
// reconstructed as registered + Poisson(undetected mean).

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fsqkd/detection.hpp"
#include "fsqkd/execution.hpp"
#include "fsqkd/protocol.hpp"

namespace fsqkd {

struct BlockChannel {
    std::span<const double> bin_transmittance;
    double dt_s = 1e-3;
};

struct BlockResult {
    SiftedTally tally;
    SiftDiagnostics sift;
    DetectionDiagnostics detection;
    std::uint64_t slots = 0;
    double duration_s = 0.0;

    bool operator==(const BlockResult&) const = default;
};

using EventSink = std::function<void(const DetectionEvent&)>;

/// First slot of channel bin `bin` (rounded to the nearest slot boundary).
std::uint64_t bin_first_slot(std::uint64_t bin, double dt_s, double rate_hz) noexcept;

BlockResult simulate_block(const PulseSource& source, const ReceiverConfig& rx,
                           const BlockChannel& channel, std::uint64_t seed,
                           Execution exec = Execution::kParallel,
                           const EventSink& sink = nullptr);

/// Raw (pre-dead-time) clicks of one bin in time order. Exposed for tests and benchmarks.
std::vector<DetectionEvent> bin_clicks(const PulseSource& source, const ReceiverConfig& rx,
                                       const BlockChannel& channel, std::uint64_t bin,
                                       std::uint64_t seed, DetectionDiagnostics& diag);

}  // namespace fsqkd
