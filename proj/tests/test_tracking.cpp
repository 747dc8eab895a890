#include <cmath>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "fsqkd/errors.hpp"
#include "fsqkd/tracking.hpp"

using namespace fsqkd;

namespace {

TransmittanceSeries constant_offset(std::size_t n, double x, double y) {
    TransmittanceSeries s;
    s.dt_s = 1e-3;
    s.intensity.assign(n, 1.0);
    s.transmittance.assign(n, 1.0);
    s.offset_x_m.assign(n, x);
    s.offset_y_m.assign(n, y);
    return s;
}

TransmittanceSeries wander(double seconds, std::uint64_t seed) {
    TurbulenceParams p;
    p.wander_std_m = 94.25e-6;
    p.wander_aspect = 0.52;
    Rng rng(seed);
    return synthesize_turbulence(p, seconds, 1e-3, rng);
}

}  // namespace

TEST(tracking, fqd_quantizes_and_saturates) {
    FqdConfig cfg;
    Rng rng(1);
    const auto r = fqd_measure({1.2e-6, -0.3e-6}, cfg, rng);
    EXPECT_NEAR(r.ex, 1.5e-6, 1e-18);
    EXPECT_NEAR(r.ey, 0.0, 1e-18);
    EXPECT_FALSE(r.saturated);
    const auto s = fqd_measure({5e-3, 0.0}, cfg, rng);
    EXPECT_TRUE(s.saturated);
    EXPECT_DOUBLE_EQ(s.ex, cfg.range_m);
}

TEST(tracking, pid_step_literal_form) {
    const auto g = PidGains::uniform(2.0, 0.5, 0.25);
    PidState st;
    FqdReading r{1e-6, -2e-6, false};
    auto out = pid_step(st, g, r);
    // e_P = e_I = e_D = reading on the first step.
    EXPECT_NEAR(out.actuation.x, -(2.0 + 0.5 + 0.25) * 1e-6, 1e-21);
    EXPECT_NEAR(out.actuation.y, (2.0 + 0.5 + 0.25) * 2e-6, 1e-21);
    out = pid_step(out.next, g, r);
    EXPECT_NEAR(out.next.e_i.x, 2e-6, 1e-21);
    EXPECT_NEAR(out.next.e_d.x, 1e-6, 1e-21);
    EXPECT_EQ(out.next.iteration, 2);
}

TEST(tracking, pid_step_difference_derivative) {
    const auto g = PidGains::uniform(0.0, 0.0, 1.0);
    PidState st;
    auto out = pid_step(st, g, {1e-6, 0.0, false}, DerivativeMode::kDifference);
    out = pid_step(out.next, g, {3e-6, 0.0, false}, DerivativeMode::kDifference);
    EXPECT_NEAR(out.next.e_d.x, 2e-6, 1e-21);
    EXPECT_NEAR(out.actuation.x, -2e-6, 1e-21);
}

TEST(tracking, pid_rejects_non_finite_reading) {
    PidState st;
    FqdReading bad{std::numeric_limits<double>::quiet_NaN(), 0.0, false};
    EXPECT_THROW(pid_step(st, PidGains::uniform(1, 0, 0), bad), ControllerFault);
}

TEST(tracking, coupling_efficiency_profile) {
    EXPECT_DOUBLE_EQ(coupling_efficiency({0, 0}, 150e-6), 1.0);
    EXPECT_NEAR(coupling_efficiency({150e-6, 0}, 150e-6), std::exp(-1.0), 1e-15);
    EXPECT_THROW(coupling_efficiency({0, 0}, 0.0), ContractViolation);
}

TEST(tracking, open_loop_reports_raw_wander) {
    const auto s = constant_offset(100, 30e-6, 40e-6);
    LoopConfig cfg;
    cfg.mode = LoopMode::kOpen;
    cfg.gains = PidGains::uniform(3.0, 0.1, 0.0);
    Rng rng(2);
    const auto r = run_loop(s, cfg, rng);
    EXPECT_NEAR(r.mean_error_m, 50e-6, 0.75e-6);
    EXPECT_NEAR(r.std_error_m, 0.0, 1e-12);
    for (const auto& v : r.residual) EXPECT_EQ(v, (Vec2{30e-6, 40e-6}));
}

TEST(tracking, integral_action_removes_static_offset) {
    const auto s = constant_offset(5000, 100e-6, -60e-6);
    LoopConfig cfg;
    cfg.gains = PidGains::uniform(0.5, 0.1, 0.0);
    Rng rng(3);
    const auto r = run_loop(s, cfg, rng);
    EXPECT_FALSE(r.unstable);
    EXPECT_LE(r.residual.back().norm(), cfg.fqd.resolution_m);
}

TEST(tracking, proportional_only_leaves_static_error) {
    // Steady state of e = w + c, c = -kp e: e = w / (1 + kp).
    const auto s = constant_offset(5000, 100e-6, 0.0);
    LoopConfig cfg;
    cfg.gains = PidGains::uniform(3.0, 0.0, 0.0);
    cfg.fqd.quantize = false;
    Rng rng(4);
    const auto r = run_loop(s, cfg, rng);
    EXPECT_NEAR(r.residual.back().x, 25e-6, 1e-9);
}

TEST(tracking, zero_gain_closed_equals_open) {
    const auto s = wander(20.0, 5);
    LoopConfig closed;
    closed.fqd.read_noise_m = 0.5e-6;
    closed.gains = PidGains::uniform(0.0, 0.0, 0.0);
    LoopConfig open = closed;
    open.mode = LoopMode::kOpen;
    Rng a(6), b(6);
    const auto rc = run_loop(s, closed, a);
    const auto ro = run_loop(s, open, b);
    EXPECT_EQ(rc.trace, ro.trace);
    EXPECT_EQ(rc.residual, ro.residual);
    EXPECT_EQ(rc.coupling, ro.coupling);
    EXPECT_EQ(rc.mean_error_m, ro.mean_error_m);
    EXPECT_EQ(rc.std_error_m, ro.std_error_m);
}

TEST(tracking, closed_loop_reduces_wander) {
    const auto s = wander(60.0, 7);
    LoopConfig cfg;
    cfg.mirror.slew_rate_m_per_s = 50e-6 / 1e-3;
    cfg.gains = PidGains::uniform(3.5, 0.0, 0.0);
    Rng a(8);
    const auto closed = run_loop(s, cfg, a);
    cfg.mode = LoopMode::kOpen;
    Rng b(8);
    const auto open = run_loop(s, cfg, b);
    EXPECT_LT(closed.mean_error_m, 0.8 * open.mean_error_m);
    EXPECT_LT(closed.std_error_m, open.std_error_m);
    EXPECT_GT(closed.mean_coupling, open.mean_coupling);
}

TEST(tracking, excessive_gain_is_flagged_unstable) {
    const auto s = wander(5.0, 9);
    LoopConfig cfg;
    cfg.gains = PidGains::uniform(50.0, 0.0, 0.0);
    Rng rng(10);
    const auto r = run_loop(s, cfg, rng);
    EXPECT_TRUE(r.unstable);
    EXPECT_LT(r.unstable_step, s.size());
}

TEST(tracking, tuning_parallel_matches_serial) {
    const auto s = wander(10.0, 11);
    LoopConfig cfg;
    cfg.fqd.read_noise_m = 0.5e-6;
    GainGrid grid;
    grid.kp = {0.0, 1.0, 2.0, 3.0, 4.0};
    grid.ki = {0.0, 0.05, 0.1};
    const auto p = tune_gains(s, cfg, grid, 12, Execution::kParallel);
    const auto q = tune_gains(s, cfg, grid, 12, Execution::kSerial);
    EXPECT_EQ(p.mean_error_m, q.mean_error_m);
    EXPECT_EQ(p.best, q.best);
    EXPECT_EQ(p.mean_error_m.size(), 15U);
    EXPECT_EQ(p.best_mean_error_m, *std::min_element(p.mean_error_m.begin(), p.mean_error_m.end()));
    EXPECT_GT(p.best.x.kp, 0.0);
}

TEST(tracking, default_grid_shape) {
    const auto g = default_gain_grid();
    EXPECT_EQ(g.kp.size(), 25U);
    EXPECT_EQ(g.ki.size(), 21U);
    EXPECT_DOUBLE_EQ(g.kp.back(), 6.0);
    EXPECT_DOUBLE_EQ(g.ki.back(), 1.0);
}

TEST(tracking, trace_csv_layout) {
    const auto s = constant_offset(3, 1e-6, 0.0);
    LoopConfig cfg;
    Rng rng(13);
    const auto r = run_loop(s, cfg, rng);
    std::ostringstream os;
    write_loop_trace(os, r, s.dt_s);
    std::istringstream is(os.str());
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "t_s,ex_m,ey_m,ax,ay,eta");
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 3);
}

TEST(tracking, rejects_bad_configuration) {
    const auto s = constant_offset(3, 0.0, 0.0);
    LoopConfig cfg;
    cfg.gains.x.kp = std::numeric_limits<double>::infinity();
    Rng rng(14);
    EXPECT_THROW(run_loop(s, cfg, rng), ConfigError);
    EXPECT_THROW(run_loop(TransmittanceSeries{}, LoopConfig{}, rng), DataError);
}

TEST(tracking, closed_loop_dominates_open_loop_across_seeds) {
    LoopConfig cfg;
    cfg.mirror.slew_rate_m_per_s = 50e-6 / 1e-3;
    cfg.gains = PidGains::uniform(3.5, 0.0, 0.0);
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        const auto s = wander(10.0, seed);
        cfg.mode = LoopMode::kClosed;
        Rng a(seed);
        const auto closed = run_loop(s, cfg, a);
        cfg.mode = LoopMode::kOpen;
        Rng b(seed);
        const auto open = run_loop(s, cfg, b);
        EXPECT_LE(closed.mean_error_m, open.mean_error_m) << seed;
    }
}
