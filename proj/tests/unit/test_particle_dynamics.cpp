#include "fixtures.hpp"

#include "levisim/particle_dynamics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <memory>
#include <numbers>
#include <sstream>

using namespace levisim;
using namespace levisim::dynamics;

namespace {

TrapModel reference_model(double drag = 9.42) {
  TrapModel m;
  m.mass = 1.05e-7;
  m.drag = drag;
  m.stiffness = Vec3(0.016, 0.26, 0.011);
  return m;
}

ParticleState at(const Vec3& p, const Vec3& v = Vec3::Zero()) {
  ParticleState s;
  s.position = p;
  s.velocity = v;
  return s;
}

// x'' + c x' + w0^2 x = 0, x(0) = x0, x'(0) = 0, underdamped.
double damped_oscillator(double x0, double c, double w0, double t) {
  const double wd = std::sqrt(w0 * w0 - 0.25 * c * c);
  return x0 * std::exp(-0.5 * c * t) * (std::cos(wd * t) + 0.5 * c / wd * std::sin(wd * t));
}

// Fixed-step classical RK4 for one decoupled axis of the linear trap.
std::vector<double> rk4_axis(double x0, double v0, double trap, double b, double m, double c,
                             double dt, double duration, int stride) {
  const auto acc = [&](double x, double v) { return (-b * (x - trap) - m * c * v) / m; };
  const long n = std::lround(duration / dt);
  std::vector<double> out{x0};
  double x = x0, v = v0;
  for (long i = 1; i <= n; ++i) {
    const double k1x = v, k1v = acc(x, v);
    const double k2x = v + 0.5 * dt * k1v, k2v = acc(x + 0.5 * dt * k1x, v + 0.5 * dt * k1v);
    const double k3x = v + 0.5 * dt * k2v, k3v = acc(x + 0.5 * dt * k2x, v + 0.5 * dt * k2v);
    const double k4x = v + dt * k3v, k4v = acc(x + dt * k3x, v + dt * k3v);
    x += dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x);
    v += dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
    if (i % stride == 0) out.push_back(x);
  }
  return out;
}

}  // namespace

TEST(NetForce, EquilibriumIsZero) {
  const Vec3 trap(0.01, -0.02, 0.003);
  EXPECT_EQ(net_force(at(trap), trap, reference_model()), Vec3::Zero());
}

TEST(NetForce, VerticalDisplacement) {
  const Vec3 f = net_force(at(Vec3(0, 0.001, 0)), Vec3::Zero(), reference_model());
  EXPECT_NEAR(f.y(), -2.6e-4, 1e-15);
  EXPECT_EQ(f.x(), 0.0);
  EXPECT_EQ(f.z(), 0.0);
}

TEST(NetForce, DragIsMassTimesRateTimesVelocity) {
  const Vec3 f = net_force(at(Vec3::Zero(), Vec3(0.1, 0, 0)), Vec3::Zero(), reference_model());
  EXPECT_NEAR(f.x(), -9.891e-8, 1e-20);
  EXPECT_EQ(f.y(), 0.0);
  EXPECT_EQ(f.z(), 0.0);
}

TEST(NetForce, GravityOnlyWhenEnabled) {
  auto m = reference_model();
  EXPECT_EQ(net_force(at(Vec3::Zero()), Vec3::Zero(), m).y(), 0.0);
  m.gravity = true;
  EXPECT_NEAR(net_force(at(Vec3::Zero()), Vec3::Zero(), m).y(), -1.05e-7 * 9.81, 1e-20);
}

TEST(NetForce, InvalidModelThrows) {
  auto m = reference_model();
  m.stiffness.y() = 0.0;
  EXPECT_THROW(net_force(at(Vec3::Zero()), Vec3::Zero(), m), std::invalid_argument);
  m = reference_model();
  m.mass = -1.0;
  EXPECT_THROW(net_force(at(Vec3::Zero()), Vec3::Zero(), m), std::invalid_argument);
  m = reference_model();
  m.source = ForceSource::full_field;
  EXPECT_THROW(net_force(at(Vec3::Zero()), Vec3::Zero(), m), std::invalid_argument);
}

TEST(Step, FixedPoint) {
  const Vec3 trap(0.002, 0.001, -0.004);
  for (double dt : {1e-4, 1.0 / 90.0, 0.5}) {
    const auto s = step(at(trap), trap, reference_model(), IntegratorConfig{}, dt);
    EXPECT_LT((s.position - trap).norm(), 1e-9);
    EXPECT_LT(s.velocity.norm(), 1e-9);
    EXPECT_DOUBLE_EQ(s.time, dt);
  }
}

TEST(Step, RejectsBadArguments) {
  EXPECT_THROW(step(at(Vec3::Zero()), Vec3::Zero(), reference_model(), {}, 0.0), std::invalid_argument);
  auto s = at(Vec3::Zero());
  s.position.x() = std::nan("");
  EXPECT_THROW(step(s, Vec3::Zero(), reference_model(), {}, 0.01), std::invalid_argument);
  IntegratorConfig bad;
  bad.min_step = 1.0;
  bad.max_step = 1e-3;
  EXPECT_THROW(step(at(Vec3::Zero()), Vec3::Zero(), reference_model(), bad, 0.01),
               std::invalid_argument);
}

TEST(Step, UndampedFrequencyFromZeroCrossings) {
  const auto m = reference_model(0.0);
  const auto traj = simulate_trajectory(at(Vec3(0, 0.001, 0)), TrapSchedule::constant(Vec3::Zero(), 0.1),
                                        m, {}, 0.1, 1e5);
  std::vector<double> crossings;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    const double a = traj[i - 1].position.y(), b = traj[i].position.y();
    if ((a < 0.0) != (b < 0.0)) {
      crossings.push_back(traj[i - 1].time + (traj[i].time - traj[i - 1].time) * a / (a - b));
    }
  }
  ASSERT_GT(crossings.size(), 40u);
  const double half_period = (crossings.back() - crossings.front()) / (crossings.size() - 1);
  const double measured = 1.0 / (2.0 * half_period);
  const double analytic = std::sqrt(0.26 / 1.05e-7) / (2.0 * std::numbers::pi);
  EXPECT_NEAR(measured, analytic, 0.01 * analytic);
  EXPECT_NEAR(measured, 250.3, 0.01 * 250.3);
}

TEST(Step, DampedAmplitudeMatchesClosedForm) {
  const auto m = reference_model();
  const double w0 = std::sqrt(0.26 / 1.05e-7);
  const auto traj = simulate_trajectory(at(Vec3(0, 0.001, 0)), TrapSchedule::constant(Vec3::Zero(), 0.21),
                                        m, {}, 0.21, 1e5);
  // Peak |y| over one period starting at 0.2 s against the analytic peak.
  double sim_peak = 0.0, ana_peak = 0.0;
  for (const auto& s : traj) {
    if (s.time < 0.2) continue;
    sim_peak = std::max(sim_peak, std::abs(s.position.y()));
    ana_peak = std::max(ana_peak, std::abs(damped_oscillator(0.001, 9.42, w0, s.time)));
  }
  EXPECT_NEAR(sim_peak, ana_peak, 0.03 * ana_peak);
  EXPECT_NEAR(ana_peak, 0.001 * std::exp(-0.5 * 9.42 * 0.2), 0.03 * ana_peak);
  for (const auto& s : traj) {
    EXPECT_NEAR(s.position.y(), damped_oscillator(0.001, 9.42, w0, s.time), 1e-7);
  }
}

TEST(Simulate, ConstantTrapAtRestStays) {
  const Vec3 trap(0, -0.002, 0.001);
  const auto traj = simulate_trajectory(at(trap), TrapSchedule::constant(trap, 1.0), reference_model(),
                                        {}, 1.0, 90.0);
  ASSERT_EQ(traj.size(), 91u);
  for (const auto& s : traj) {
    EXPECT_LT((s.position - trap).norm(), 1e-12);
    EXPECT_FALSE(s.escaped);
  }
}

TEST(Simulate, StepResponseSettlesOnAnalyticSchedule) {
  const auto m = reference_model();
  const Vec3 trap(0.005, 0, 0);
  const double rate = 1e4;
  const auto traj = simulate_trajectory(at(Vec3::Zero()), TrapSchedule::constant(trap, 1.5), m, {},
                                        1.5, rate);
  const double w0 = std::sqrt(0.016 / 1.05e-7);
  double sim_last = 0.0, ana_last = 0.0;
  for (const auto& s : traj) {
    if (std::abs(s.position.x() - trap.x()) >= 1e-4) sim_last = s.time;
    if (std::abs(damped_oscillator(-0.005, 9.42, w0, s.time)) >= 1e-4) ana_last = s.time;
  }
  EXPECT_LT(std::abs(traj.back().position.x() - trap.x()), 1e-4);
  EXPECT_NEAR(sim_last, ana_last, 1.0 / rate + 1e-12);
  // Envelope 5 mm * exp(-t / tau), tau = 2 / c, reaches 0.1 mm after tau ln 50.
  const double tau = 2.0 / 9.42;
  EXPECT_NEAR(tau, 0.21, 0.005);
  EXPECT_LE(sim_last, tau * std::log(50.0 * 1.001));
  EXPECT_GT(sim_last, tau * std::log(50.0) - 2.0 * std::numbers::pi / w0);
}

TEST(Simulate, MatchesFineFixedStepRk4) {
  const auto m = reference_model();
  const Vec3 trap(0.005, 0, 0);
  const auto traj = simulate_trajectory(at(Vec3::Zero()), TrapSchedule::constant(trap, 1.0), m, {},
                                        1.0, 1000.0);
  const auto oracle = rk4_axis(0.0, 0.0, 0.005, 0.016, 1.05e-7, 9.42, 1e-5, 1.0, 100);
  ASSERT_EQ(traj.size(), oracle.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    worst = std::max(worst, std::abs(traj[i].position.x() - oracle[i]));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Simulate, DampedEnergyNeverIncreasesOverTenThousandTicks) {
  const auto m = reference_model();
  Stepper stepper(m, {});
  ParticleState s = at(Vec3(0.004, 0.001, -0.003), Vec3(0.02, -0.01, 0.01));
  double e = m.energy(s, Vec3::Zero());
  for (int k = 0; k < 10000; ++k) {
    s = stepper.advance(s, Vec3::Zero(), 1.0 / 90.0);
    const double next = m.energy(s, Vec3::Zero());
    ASSERT_LE(next, e) << "tick " << k;
    e = next;
  }
}

TEST(Simulate, UndampedEnergyDriftBelowTenthPercent) {
  const auto m = reference_model(0.0);
  const auto traj = simulate_trajectory(at(Vec3(0.004, 0.001, -0.003)),
                                        TrapSchedule::constant(Vec3::Zero(), 1.0), m, {}, 1.0, 1e4);
  const double e0 = m.energy(traj.front(), Vec3::Zero());
  for (const auto& s : traj) EXPECT_LT(std::abs(m.energy(s, Vec3::Zero()) - e0), 1e-3 * e0);
}

TEST(Simulate, AxesStayDecoupled) {
  const auto m = reference_model();
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 p = Vec3::Zero();
    p[axis] = 0.002;
    const auto traj =
        simulate_trajectory(at(p), TrapSchedule::constant(Vec3::Zero(), 1.0), m, {}, 1.0, 500.0);
    for (const auto& s : traj) {
      for (int other = 0; other < 3; ++other) {
        if (other == axis) continue;
        EXPECT_LT(std::abs(s.position[other]), 1e-12);
      }
    }
  }
}

TEST(Simulate, TighterTolerancesStayWithinLooserTolerancePerTick) {
  const auto m = reference_model();
  IntegratorConfig loose;
  IntegratorConfig tight;
  tight.rel_tol = loose.rel_tol / 10;
  tight.abs_tol_position = loose.abs_tol_position / 10;
  tight.abs_tol_velocity = loose.abs_tol_velocity / 10;
  const std::vector<ParticleState> starts{
      at(Vec3(0.003, 0.001, -0.002)), at(Vec3(0.005, 0, 0)), at(Vec3(0, -0.002, 0), Vec3(0, 0.3, 0)),
      at(Vec3(-0.01, 0.0005, 0.008), Vec3(0.05, -0.1, 0.02))};
  for (const auto& s0 : starts) {
    const auto a = step(s0, Vec3::Zero(), m, loose, 1.0 / 90.0);
    const auto b = step(s0, Vec3::Zero(), m, tight, 1.0 / 90.0);
    for (int k = 0; k < 3; ++k) {
      const double tol = loose.abs_tol_position + loose.rel_tol * std::abs(b.position[k]);
      EXPECT_LT(std::abs(a.position[k] - b.position[k]), tol) << k;
    }
  }
}

TEST(Simulate, GlobalErrorTracksTolerance) {
  const auto m = reference_model();
  IntegratorConfig loose;
  IntegratorConfig tight = loose;
  tight.rel_tol /= 10;
  tight.abs_tol_position /= 10;
  tight.abs_tol_velocity /= 10;
  IntegratorConfig reference = loose;
  reference.rel_tol = 1e-11;
  reference.abs_tol_position = 1e-15;
  reference.abs_tol_velocity = 1e-15;
  const ParticleState init = at(Vec3(0.003, 0.001, -0.002));
  const auto schedule = TrapSchedule::constant(Vec3::Zero(), 1.0);
  const auto a = simulate_trajectory(init, schedule, m, loose, 1.0, 90.0);
  const auto b = simulate_trajectory(init, schedule, m, tight, 1.0, 90.0);
  const auto r = simulate_trajectory(init, schedule, m, reference, 1.0, 90.0);
  double ea = 0.0, eb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ea = std::max(ea, (a[i].position - r[i].position).cwiseAbs().maxCoeff());
    eb = std::max(eb, (b[i].position - r[i].position).cwiseAbs().maxCoeff());
  }
  EXPECT_GT(ea / eb, 5.0);
  EXPECT_LT(ea / eb, 20.0);
  EXPECT_LT(ea, 1e-7);
}

TEST(Simulate, VerticalAccelerationDominates) {
  const auto m = reference_model();
  const Vec3 f = net_force(at(Vec3::Constant(0.001)), Vec3::Zero(), m);
  EXPECT_GT(std::abs(f.y()), 10.0 * std::abs(f.x()));
  EXPECT_GT(std::abs(f.y()), 10.0 * std::abs(f.z()));
}

TEST(Simulate, DeterministicBitwise) {
  const auto schedule = TrapSchedule({{0.0, Vec3::Zero()}, {0.3, Vec3(0.01, 0.002, 0)},
                                      {0.7, Vec3(-0.01, 0, 0.004)}, {1.0, Vec3::Zero()}});
  const auto a = simulate_trajectory(at(Vec3::Zero()), schedule, reference_model(), {}, 1.0, 90.0);
  const auto b = simulate_trajectory(at(Vec3::Zero()), schedule, reference_model(), {}, 1.0, 90.0);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(std::memcmp(a[i].position.data(), b[i].position.data(), sizeof(double) * 3), 0);
    EXPECT_EQ(std::memcmp(a[i].velocity.data(), b[i].velocity.data(), sizeof(double) * 3), 0);
  }
}

TEST(Simulate, ScheduleMustCoverInterval) {
  EXPECT_THROW(simulate_trajectory(at(Vec3::Zero()), TrapSchedule::constant(Vec3::Zero(), 0.5),
                                   reference_model(), {}, 1.0, 90.0),
               std::invalid_argument);
  EXPECT_THROW(TrapSchedule({{0.0, Vec3::Zero()}, {0.0, Vec3::Zero()}}), std::invalid_argument);
}

TEST(Simulate, ScheduleInterpolatesLinearly) {
  const TrapSchedule s({{0.0, Vec3::Zero()}, {1.0, Vec3(0.01, 0, -0.02)}});
  EXPECT_TRUE(s.at(0.25).isApprox(Vec3(0.0025, 0, -0.005)));
  EXPECT_EQ(s.at(-1.0), Vec3::Zero());
  EXPECT_EQ(s.at(2.0), Vec3(0.01, 0, -0.02));
}

TEST(Simulate, StiffUnderflowNamesAxis) {
  auto m = reference_model(0.0);
  m.stiffness = Vec3(0.016, 0.26, 1e9);
  IntegratorConfig cfg;
  cfg.min_step = 1e-4;
  cfg.max_step = 1e-3;
  try {
    step(at(Vec3(0, 0, 0.001)), Vec3::Zero(), m, cfg, 0.01);
    FAIL() << "expected IntegrationError";
  } catch (const IntegrationError& e) {
    EXPECT_NE(e.component().find('z'), std::string::npos) << e.component();
    EXPECT_GE(e.time(), 0.0);
  }
}

TEST(Simulate, EscapeFlaggedOutsideVolumeMargin) {
  auto m = reference_model();
  const Vec3 far(0.2, 0, 0);
  const auto s = step(at(Vec3::Zero()), far, m, {}, 1.0);
  EXPECT_TRUE(s.escaped);
  const auto inside = step(at(Vec3::Zero()), Vec3(0.01, 0, 0), m, {}, 1.0);
  EXPECT_FALSE(inside.escaped);
}

TEST(FullField, TranslatedTrapHoldsAndRestores) {
  const auto& setup = levisim::testing::default_trap();
  TrapModel m = reference_model();
  m.source = ForceSource::full_field;
  m.field_trap.field = std::make_shared<acoustics::AcousticField>(setup.field);
  m.field_trap.center = setup.center;
  const Vec3 trap(0.01, 0.005, -0.01);
  EXPECT_LT(net_force(at(trap), trap, m).norm(), 1e-8);
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 p = trap;
    p[axis] += 5e-4;
    EXPECT_LT(net_force(at(p), trap, m)[axis], 0.0);
  }
  ParticleState escaped = at(trap + Vec3(0, 5e-4, 0), Vec3(0.1, 0, 0));
  escaped.escaped = true;
  const Vec3 f = net_force(escaped, trap, m);
  EXPECT_NEAR(f.x(), -9.891e-8, 1e-20);
  EXPECT_EQ(f.y(), 0.0);
}

TEST(FullField, HeldParticleSettles) {
  const auto& setup = levisim::testing::default_trap();
  TrapModel m = reference_model(100.0);
  m.source = ForceSource::full_field;
  m.field_trap.field = std::make_shared<acoustics::AcousticField>(setup.field);
  m.field_trap.center = setup.center;
  const auto traj = simulate_trajectory(at(Vec3(0, 3e-4, 0)), TrapSchedule::constant(Vec3::Zero(), 0.1),
                                        m, {}, 0.1, 90.0);
  EXPECT_LT(traj.back().position.norm(), 1e-5);
  EXPECT_FALSE(traj.back().escaped);
}

TEST(TrajectoryCsv, HeaderAndRows) {
  const auto schedule = TrapSchedule::constant(Vec3(0.001, 0, 0), 0.1);
  const auto traj = simulate_trajectory(at(Vec3::Zero()), schedule, reference_model(), {}, 0.1, 90.0);
  std::ostringstream out;
  write_trajectory_csv(out, traj, schedule);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "t_s,x_m,y_m,z_m,vx,vy,vz,trap_x,trap_y,trap_z");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 9);
  }
  EXPECT_EQ(rows, static_cast<int>(traj.size()));
}
