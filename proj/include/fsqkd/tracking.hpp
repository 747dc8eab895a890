#pragma once

// Four-quadrant detector readout, PID tip/tilt control and the resulting
// single-mode-fibre coupling efficiency.

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "fsqkd/channel.hpp"
#include "fsqkd/execution.hpp"
#include "fsqkd/random.hpp"

namespace fsqkd {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    double norm() const noexcept { return std::hypot(x, y); }
    bool finite() const noexcept { return std::isfinite(x) && std::isfinite(y); }
    friend Vec2 operator+(Vec2 a, Vec2 b) noexcept { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) noexcept { return {a.x - b.x, a.y - b.y}; }
    friend bool operator==(Vec2, Vec2) = default;
};

struct FqdConfig {
    double resolution_m = 0.75e-6;
    double range_m = 3.05e-3;
    double read_noise_m = 0.0;
    bool quantize = true;
};

struct FqdReading {
    double ex = 0.0;
    double ey = 0.0;
    bool saturated = false;

    Vec2 vec() const noexcept { return {ex, ey}; }
    friend bool operator==(const FqdReading&, const FqdReading&) = default;
};

/// Offset plus Gaussian read noise, rounded to the resolution grid and clamped to the sensor range.
FqdReading fqd_measure(Vec2 true_offset, const FqdConfig& cfg, Rng& rng);

struct AxisGains {
    double kp = 0.0;
    double ki = 0.0;
    double kd = 0.0;
    friend bool operator==(const AxisGains&, const AxisGains&) = default;
};

struct PidGains {
    AxisGains x;
    AxisGains y;

    static PidGains uniform(double kp, double ki, double kd) noexcept {
        return {{kp, ki, kd}, {kp, ki, kd}};
    }
    bool finite() const noexcept;
    friend bool operator==(const PidGains&, const PidGains&) = default;
};

/// kLiteral: e_D(t) = e_I(t) - e_I(t-1), which reduces to e_P(t).
/// kDifference: the conventional e_P(t) - e_P(t-1).
enum class DerivativeMode { kLiteral, kDifference };

struct PidState {
    Vec2 e_p;
    Vec2 e_i;
    Vec2 e_d;
    std::int64_t iteration = 0;
};

struct PidOutput {
    Vec2 actuation;
    PidState next;
};

PidOutput pid_step(const PidState& state, const PidGains& gains, const FqdReading& reading,
                   DerivativeMode mode = DerivativeMode::kLiteral);

/// First-order lag tip/tilt actuator with an optional slew limit.
struct MirrorModel {
    double time_constant_s = 5e-3;
    double slew_rate_m_per_s = std::numeric_limits<double>::infinity();
};

/// Gaussian mode overlap exp(-|offset|^2 / w^2).
double coupling_efficiency(Vec2 offset, double mode_radius_m);

enum class LoopMode { kOpen, kClosed };
std::string_view to_string(LoopMode m) noexcept;

struct LoopConfig {
    PidGains gains;
    DerivativeMode derivative = DerivativeMode::kLiteral;
    MirrorModel mirror;
    FqdConfig fqd;
    double mode_radius_m = 150e-6;
    LoopMode mode = LoopMode::kClosed;
};

struct LoopReport {
    LoopMode mode = LoopMode::kOpen;
    double mean_error_m = 0.0;  // statistics of the radial FQD error
    double std_error_m = 0.0;
    double mean_coupling = 0.0;
    std::vector<FqdReading> trace;
    std::vector<Vec2> actuation;
    std::vector<Vec2> residual;  // true beam offset after correction
    std::vector<double> coupling;
    bool unstable = false;
    std::size_t unstable_step = 0;
};

/// Runs the fine-pointing loop over the wander offsets of a channel realization.
/// If the residual exceeds ten times the sensor range the loop is flagged unstable
/// and the actuator is parked at zero for the rest of the series.
LoopReport run_loop(const TransmittanceSeries& series, const LoopConfig& cfg, Rng& rng);

struct GainGrid {
    std::vector<double> kp;
    std::vector<double> ki;
    std::vector<double> kd{0.0};
};

/// kp in [0, 6] step 0.25, ki in [0, 1] step 0.05, kd = 0.
GainGrid default_gain_grid();

struct TuneResult {
    PidGains best;
    double best_mean_error_m = 0.0;
    std::vector<double> mean_error_m;  // row-major over (kp, ki, kd)
};

/// Exhaustive grid search minimizing the closed-loop mean radial error.
/// Every grid point sees the same FQD noise realization.
TuneResult tune_gains(const TransmittanceSeries& series, const LoopConfig& base,
                      const GainGrid& grid, std::uint64_t seed,
                      Execution exec = Execution::kParallel);

/// CSV with columns t_s, ex_m, ey_m, ax, ay, eta.
void write_loop_trace(std::ostream& os, const LoopReport& report, double dt_s);

}  // namespace fsqkd
