#include "fsqkd/tracking.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "fsqkd/errors.hpp"

namespace fsqkd {

namespace {

double quantize(double v, double step) { return std::nearbyint(v / step) * step; }

double axis_actuation(const AxisGains& g, double p, double i, double d) {
    return -(g.kp * p + g.ki * i + g.kd * d);
}

double limit(double delta, double max_step) { return std::clamp(delta, -max_step, max_step); }

struct RadialStats {
    double mean;
    double stddev;
};

RadialStats radial_stats(std::span<const FqdReading> trace) {
    if (trace.empty()) return {0.0, 0.0};
    double sum = 0.0;
    for (const auto& r : trace) sum += std::hypot(r.ex, r.ey);
    const double mean = sum / static_cast<double>(trace.size());
    double ss = 0.0;
    for (const auto& r : trace) {
        const double d = std::hypot(r.ex, r.ey) - mean;
        ss += d * d;
    }
    return {mean, std::sqrt(ss / static_cast<double>(trace.size()))};
}

}  // namespace

FqdReading fqd_measure(Vec2 true_offset, const FqdConfig& cfg, Rng& rng) {
    Vec2 v = true_offset;
    if (cfg.read_noise_m > 0.0) {
        v.x += cfg.read_noise_m * rng.normal();
        v.y += cfg.read_noise_m * rng.normal();
    }
    if (cfg.quantize) {
        v.x = quantize(v.x, cfg.resolution_m);
        v.y = quantize(v.y, cfg.resolution_m);
    }
    FqdReading r;
    r.saturated = std::fabs(v.x) > cfg.range_m || std::fabs(v.y) > cfg.range_m;
    r.ex = std::clamp(v.x, -cfg.range_m, cfg.range_m);
    r.ey = std::clamp(v.y, -cfg.range_m, cfg.range_m);
    return r;
}

bool PidGains::finite() const noexcept {
    for (const AxisGains* g : {&x, &y}) {
        if (!std::isfinite(g->kp) || !std::isfinite(g->ki) || !std::isfinite(g->kd)) return false;
    }
    return true;
}

PidOutput pid_step(const PidState& state, const PidGains& gains, const FqdReading& reading,
                   DerivativeMode mode) {
    if (!reading.vec().finite()) throw ControllerFault("pid: non-finite FQD reading");
    if (state.iteration < 0) throw ContractViolation("pid: negative iteration counter");

    PidOutput out;
    PidState& next = out.next;
    next.e_p = reading.vec();
    next.e_i = state.e_i + next.e_p;
    if (mode == DerivativeMode::kLiteral) {
        next.e_d = next.e_i - state.e_i;
    } else {
        next.e_d = state.iteration == 0 ? next.e_p : next.e_p - state.e_p;
    }
    next.iteration = state.iteration + 1;
    out.actuation = {axis_actuation(gains.x, next.e_p.x, next.e_i.x, next.e_d.x),
                     axis_actuation(gains.y, next.e_p.y, next.e_i.y, next.e_d.y)};
    return out;
}

double coupling_efficiency(Vec2 offset, double mode_radius_m) {
    if (!(mode_radius_m > 0.0)) throw ContractViolation("coupling: mode radius must be positive");
    const double r2 = offset.x * offset.x + offset.y * offset.y;
    return std::exp(-r2 / (mode_radius_m * mode_radius_m));
}

std::string_view to_string(LoopMode m) noexcept { return m == LoopMode::kOpen ? "open" : "closed"; }

LoopReport run_loop(const TransmittanceSeries& series, const LoopConfig& cfg, Rng& rng) {
    if (series.empty()) throw DataError("tracking: empty channel series");
    if (!cfg.gains.finite()) throw ConfigError("tracking: PID gains must be finite");
    if (!(cfg.mirror.time_constant_s > 0.0)) {
        throw ConfigError("tracking: mirror time constant must be positive");
    }

    const std::size_t n = series.size();
    const double alpha = -std::expm1(-series.dt_s / cfg.mirror.time_constant_s);
    const double max_step = cfg.mirror.slew_rate_m_per_s * series.dt_s;
    const double divergence = 10.0 * cfg.fqd.range_m;

    LoopReport rep;
    rep.mode = cfg.mode;
    rep.trace.reserve(n);
    rep.actuation.reserve(n);
    rep.residual.reserve(n);
    rep.coupling.reserve(n);

    PidState state;
    Vec2 correction;
    bool engaged = cfg.mode == LoopMode::kClosed;
    double coupling_sum = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const Vec2 residual = Vec2{series.offset_x_m[t], series.offset_y_m[t]} + correction;
        if (engaged && residual.norm() > divergence) {
            rep.unstable = true;
            rep.unstable_step = t;
            engaged = false;
            correction = {};
            state = {};
        }
        const Vec2 beam = engaged ? residual : Vec2{series.offset_x_m[t], series.offset_y_m[t]};
        const FqdReading reading = fqd_measure(beam, cfg.fqd, rng);
        const PidOutput out = pid_step(state, cfg.gains, reading, cfg.derivative);
        state = out.next;
        if (engaged) {
            correction.x += limit((out.actuation.x - correction.x) * alpha, max_step);
            correction.y += limit((out.actuation.y - correction.y) * alpha, max_step);
        }
        const double eta = coupling_efficiency(beam, cfg.mode_radius_m);
        coupling_sum += eta;
        rep.trace.push_back(reading);
        rep.actuation.push_back(out.actuation);
        rep.residual.push_back(beam);
        rep.coupling.push_back(eta);
    }
    const RadialStats stats = radial_stats(rep.trace);
    rep.mean_error_m = stats.mean;
    rep.std_error_m = stats.stddev;
    rep.mean_coupling = coupling_sum / static_cast<double>(n);
    return rep;
}

GainGrid default_gain_grid() {
    GainGrid g;
    for (int i = 0; i <= 24; ++i) g.kp.push_back(0.25 * i);
    for (int i = 0; i <= 20; ++i) g.ki.push_back(0.05 * i);
    return g;
}

TuneResult tune_gains(const TransmittanceSeries& series, const LoopConfig& base,
                      const GainGrid& grid, std::uint64_t seed, Execution exec) {
    if (grid.kp.empty() || grid.ki.empty() || grid.kd.empty()) {
        throw ConfigError("tune: every gain axis needs at least one value");
    }
    const std::size_t nki = grid.ki.size();
    const std::size_t nkd = grid.kd.size();
    const std::size_t points = grid.kp.size() * nki * nkd;
    auto gains_at = [&](std::size_t i) {
        return PidGains::uniform(grid.kp[i / (nki * nkd)], grid.ki[(i / nkd) % nki],
                                 grid.kd[i % nkd]);
    };
    auto evaluate = [&](std::size_t i) {
        LoopConfig cfg = base;
        cfg.mode = LoopMode::kClosed;
        cfg.gains = gains_at(i);
        Rng rng(derive_seed(seed, Stream::kTuning));
        const LoopReport rep = run_loop(series, cfg, rng);
        return rep.unstable ? std::numeric_limits<double>::infinity() : rep.mean_error_m;
    };

    TuneResult result;
    result.mean_error_m.assign(points, 0.0);
    const auto count = static_cast<std::int64_t>(points);
    if (exec == Execution::kParallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::int64_t i = 0; i < count; ++i) {
            result.mean_error_m[static_cast<std::size_t>(i)] = evaluate(static_cast<std::size_t>(i));
        }
    } else {
        for (std::int64_t i = 0; i < count; ++i) {
            result.mean_error_m[static_cast<std::size_t>(i)] = evaluate(static_cast<std::size_t>(i));
        }
    }
    // First minimum in grid order, independent of thread scheduling.
    const auto best = std::min_element(result.mean_error_m.begin(), result.mean_error_m.end());
    const auto best_index = static_cast<std::size_t>(best - result.mean_error_m.begin());
    result.best = gains_at(best_index);
    result.best_mean_error_m = *best;
    return result;
}

void write_loop_trace(std::ostream& os, const LoopReport& report, double dt_s) {
    os << "t_s,ex_m,ey_m,ax,ay,eta\n";
    os << std::setprecision(17);
    for (std::size_t i = 0; i < report.trace.size(); ++i) {
        const auto& r = report.trace[i];
        const auto& a = report.actuation[i];
        os << static_cast<double>(i) * dt_s << ',' << r.ex << ',' << r.ey << ',' << a.x << ','
           << a.y << ',' << report.coupling[i] << '\n';
    }
}

}  // namespace fsqkd
