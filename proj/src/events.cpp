#include "fsqkd/events.hpp"

#include <string>

#include "fsqkd/errors.hpp"

namespace fsqkd {

std::string_view to_string(Detector d) noexcept {
    switch (d) {
        case Detector::kZ:
            return "Z";
        case Detector::kXOut1:
            return "X1";
        case Detector::kXOut2:
            return "X2";
    }
    return "?";
}

std::string_view to_string(Bin b) noexcept {
    switch (b) {
        case Bin::kEarly:
            return "E";
        case Bin::kCentral:
            return "C";
        case Bin::kLate:
            return "L";
    }
    return "?";
}

Detector parse_detector(std::string_view s) {
    if (s == "Z") return Detector::kZ;
    if (s == "X1") return Detector::kXOut1;
    if (s == "X2") return Detector::kXOut2;
    throw DataError("unknown detector label '" + std::string(s) + "'");
}

Bin parse_bin(std::string_view s) {
    if (s == "E") return Bin::kEarly;
    if (s == "C") return Bin::kCentral;
    if (s == "L") return Bin::kLate;
    throw DataError("unknown bin label '" + std::string(s) + "'");
}

}  // namespace fsqkd
