#pragma once

#include <cstdint>
#include <string_view>

namespace fsqkd {

enum class Detector : std::uint8_t { kZ = 0, kXOut1 = 1, kXOut2 = 2 };
inline constexpr int kDetectorCount = 3;

/// Gating window a click was assigned to. The Z detector only uses Early/Late;
/// the interferometer outputs add the Central (interfering) window between them.
enum class Bin : std::uint8_t { kEarly = 0, kCentral = 1, kLate = 2 };

struct DetectionEvent {
    std::uint64_t slot = 0;
    Detector detector = Detector::kZ;
    Bin bin = Bin::kEarly;
    double timestamp_s = 0.0;
    // Simulator bookkeeping: photons emitted in this slot, or -1 when unknown.
    // Not part of the exported event format.
    int emitted_photons = -1;
};

std::string_view to_string(Detector d) noexcept;
std::string_view to_string(Bin b) noexcept;
Detector parse_detector(std::string_view s);
Bin parse_bin(std::string_view s);

}  // namespace fsqkd
