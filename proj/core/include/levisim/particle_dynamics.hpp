#pragma once

#include "levisim/common.hpp"

#include <cmath>
#include <iosfwd>
#include <memory>
#include <vector>

namespace levisim::acoustics {
class AcousticField;
}

namespace levisim::dynamics {

struct ParticleState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double time = 0.0;
  bool escaped = false;

  bool finite() const { return position.allFinite() && velocity.allFinite() && std::isfinite(time); }
};

enum class ForceSource { linear, full_field };

/// Precomputed acoustic trap used by the full-field force source. The force
/// for a trap commanded at T is the field force at x - T + center, i.e. the
/// trap is translated rigidly.
struct FieldTrap {
  std::shared_ptr<const acoustics::AcousticField> field;
  Vec3 center = Vec3::Zero();
};

/// Coefficients of m x'' = F_a - m c x'. Defaults: m for a 2 mm EPS bead,
/// c as a per-mass decay rate (1/s), b from the Taylor linearization.
struct TrapModel {
  double mass = 1.05e-7;
  double drag = 9.42;
  Vec3 stiffness = Vec3(0.016, 0.26, 0.011);
  ForceSource source = ForceSource::linear;
  FieldTrap field_trap;
  bool gravity = false;
  Box volume = default_levitation_volume();
  /// Particles further than this outside the volume are flagged as escaped.
  double escape_margin = 0.01;

  /// Throws std::invalid_argument when the coefficients are unusable.
  void validate() const;
  /// 1/2 m |v|^2 + 1/2 sum b_i (x_i - trap_i)^2.
  double energy(const ParticleState& state, const Vec3& trap) const;
};

struct IntegratorConfig {
  double rel_tol = 1e-6;
  double abs_tol_position = 1e-9;
  double abs_tol_velocity = 1e-9;
  double max_step = 1e-3;
  double min_step = 1e-12;

  void validate() const;
};

/// F = F_a - m c v (gravity only when enabled on the model).
Vec3 net_force(const ParticleState& state, const Vec3& trap_position, const TrapModel& model);

/// Trap position over time, linearly interpolated between samples.
class TrapSchedule {
 public:
  struct Sample {
    double time;
    Vec3 position;
  };

  TrapSchedule() = default;
  explicit TrapSchedule(std::vector<Sample> samples);

  static TrapSchedule constant(const Vec3& position, double duration);

  Vec3 at(double t) const;
  double start() const;
  double end() const;
  bool covers(double t0, double t1) const;
  const std::vector<Sample>& samples() const { return samples_; }

 private:
  std::vector<Sample> samples_;
};

struct StepStats {
  long accepted = 0;
  long rejected = 0;
  long evaluations = 0;
};

/// Adaptive Dormand-Prince 5(4) stepper. Owns its step-size controller state
/// and is meant to be used from one thread at a time.
class Stepper {
 public:
  Stepper(TrapModel model, IntegratorConfig config);

  /// Advances `state` by dt while the trap moves linearly from trap_begin to
  /// trap_end. Throws IntegrationError when the step size underflows.
  ParticleState advance(const ParticleState& state, const Vec3& trap_begin, const Vec3& trap_end,
                        double dt);
  ParticleState advance(const ParticleState& state, const Vec3& trap, double dt) {
    return advance(state, trap, trap, dt);
  }

  const TrapModel& model() const { return model_; }
  const IntegratorConfig& config() const { return config_; }
  const StepStats& stats() const { return stats_; }
  void reset() { h_ = 0.0; }

 private:
  TrapModel model_;
  IntegratorConfig config_;
  StepStats stats_;
  double h_ = 0.0;
};

/// One-shot advance with a fresh stepper and a stationary trap.
ParticleState step(const ParticleState& state, const Vec3& trap_position, const TrapModel& model,
                   const IntegratorConfig& config, double dt);

/// Samples at t = 0, 1/rate, ... up to duration (inclusive when it lands on the grid).
std::vector<ParticleState> simulate_trajectory(const ParticleState& initial,
                                               const TrapSchedule& schedule,
                                               const TrapModel& model,
                                               const IntegratorConfig& config, double duration,
                                               double sample_rate);

/// t_s, x_m, y_m, z_m, vx, vy, vz, trap_x, trap_y, trap_z rows.
void write_trajectory_csv(std::ostream& out, const std::vector<ParticleState>& samples,
                          const TrapSchedule& schedule);

}  // namespace levisim::dynamics
