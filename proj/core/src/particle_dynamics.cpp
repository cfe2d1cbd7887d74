#include "levisim/particle_dynamics.hpp"

#include "levisim/acoustic_field.hpp"
#include "levisim/csv.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace levisim::dynamics {

namespace {

constexpr double kGravity = 9.81;

using State6 = Eigen::Matrix<double, 6, 1>;

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// b - b* (fifth minus embedded fourth order weights).
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

const char* component_name(int i) {
  static const char* names[] = {"x", "y", "z", "vx", "vy", "vz"};
  return names[i];
}

Vec3 acoustic_term(const Vec3& position, bool escaped, const Vec3& trap, const TrapModel& model) {
  if (model.source == ForceSource::linear) {
    return -model.stiffness.cwiseProduct(position - trap);
  }
  if (escaped || !model.field_trap.field) return Vec3::Zero();
  const auto& field = *model.field_trap.field;
  const Vec3 local = position - trap + model.field_trap.center;
  if (!field.volume().contains(local)) return Vec3::Zero();
  return field.force_with_step(local, field.fd_step());
}

Vec3 total_force(const Vec3& position, const Vec3& velocity, bool escaped, const Vec3& trap,
                 const TrapModel& model) {
  Vec3 f = acoustic_term(position, escaped, trap, model) - model.mass * model.drag * velocity;
  if (model.gravity) f.y() -= model.mass * kGravity;
  return f;
}

}  // namespace

void TrapModel::validate() const {
  if (!(mass > 0.0) || !std::isfinite(mass)) throw std::invalid_argument("mass must be positive");
  if (!(drag >= 0.0) || !std::isfinite(drag)) throw std::invalid_argument("drag must be >= 0");
  if (source == ForceSource::linear) {
    for (int i = 0; i < 3; ++i) {
      if (!(stiffness[i] > 0.0)) {
        throw std::invalid_argument(std::string("stiffness must be positive on axis ") +
                                    axis_name(i));
      }
    }
  } else if (!field_trap.field) {
    throw std::invalid_argument("full-field source selected without a field");
  }
}

double TrapModel::energy(const ParticleState& state, const Vec3& trap) const {
  const Vec3 d = state.position - trap;
  return 0.5 * mass * state.velocity.squaredNorm() + 0.5 * stiffness.dot(d.cwiseProduct(d));
}

void IntegratorConfig::validate() const {
  if (!(rel_tol > 0.0) || !(abs_tol_position > 0.0) || !(abs_tol_velocity > 0.0)) {
    throw std::invalid_argument("integrator tolerances must be positive");
  }
  if (!(min_step > 0.0) || !(min_step <= max_step)) {
    throw std::invalid_argument("integrator needs 0 < min_step <= max_step");
  }
}

Vec3 net_force(const ParticleState& state, const Vec3& trap_position, const TrapModel& model) {
  model.validate();
  return total_force(state.position, state.velocity, state.escaped, trap_position, model);
}

TrapSchedule::TrapSchedule(std::vector<Sample> samples) : samples_(std::move(samples)) {
  if (samples_.empty()) throw std::invalid_argument("empty trap schedule");
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!std::isfinite(samples_[i].time) || !samples_[i].position.allFinite()) {
      throw std::invalid_argument("trap schedule entries must be finite");
    }
    if (i > 0 && !(samples_[i].time > samples_[i - 1].time)) {
      throw std::invalid_argument("trap schedule times must be strictly increasing");
    }
  }
}

TrapSchedule TrapSchedule::constant(const Vec3& position, double duration) {
  if (duration > 0.0) return TrapSchedule({{0.0, position}, {duration, position}});
  return TrapSchedule({{0.0, position}});
}

double TrapSchedule::start() const { return samples_.front().time; }
double TrapSchedule::end() const { return samples_.back().time; }

bool TrapSchedule::covers(double t0, double t1) const {
  return !samples_.empty() && start() <= t0 && end() >= t1;
}

Vec3 TrapSchedule::at(double t) const {
  if (samples_.empty()) throw std::logic_error("empty trap schedule");
  if (t <= samples_.front().time) return samples_.front().position;
  if (t >= samples_.back().time) return samples_.back().position;
  const auto it = std::upper_bound(samples_.begin(), samples_.end(), t,
                                   [](double v, const Sample& s) { return v < s.time; });
  const Sample& hi = *it;
  const Sample& lo = *(it - 1);
  const double u = (t - lo.time) / (hi.time - lo.time);
  return lo.position + u * (hi.position - lo.position);
}

Stepper::Stepper(TrapModel model, IntegratorConfig config)
    : model_(std::move(model)), config_(config) {
  model_.validate();
  config_.validate();
}

ParticleState Stepper::advance(const ParticleState& state, const Vec3& trap_begin,
                               const Vec3& trap_end, double dt) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw std::invalid_argument("dt must be positive");
  if (!state.finite()) throw std::invalid_argument("particle state is not finite");

  const double t0 = state.time;
  const bool escaped = state.escaped;
  const double inv_mass = 1.0 / model_.mass;
  auto rhs = [&](double t, const State6& y) {
    const double u = std::clamp((t - t0) / dt, 0.0, 1.0);
    const Vec3 trap = trap_begin + u * (trap_end - trap_begin);
    const Vec3 x = y.head<3>();
    const Vec3 v = y.tail<3>();
    State6 dy;
    dy.head<3>() = v;
    dy.tail<3>() = total_force(x, v, escaped, trap, model_) * inv_mass;
    ++stats_.evaluations;
    return dy;
  };

  State6 y;
  y << state.position, state.velocity;
  std::array<double, 6> atol{};
  for (int i = 0; i < 3; ++i) {
    atol[i] = config_.abs_tol_position;
    atol[i + 3] = config_.abs_tol_velocity;
  }

  // A damped linear trap that does not move can only lose energy, so steps
  // that gain energy are rejected like steps that miss the tolerance.
  const bool check_energy = model_.source == ForceSource::linear && model_.drag > 0.0 &&
                            !model_.gravity && trap_begin == trap_end;
  auto energy_of = [&](const State6& s) {
    ParticleState p;
    p.position = s.head<3>();
    p.velocity = s.tail<3>();
    return model_.energy(p, trap_begin);
  };

  double t = 0.0;  // elapsed within this call
  double h = h_ > 0.0 ? h_ : std::min(config_.max_step, dt);
  State6 k1 = rhs(t0, y);
  while (dt - t > 1e-15 * std::max(1.0, dt)) {
    h = std::min(h, config_.max_step);
    const bool last = h >= dt - t;
    const double hs = last ? dt - t : h;
    const double ts = t0 + t;

    const State6 k2 = rhs(ts + c2 * hs, y + hs * (a21 * k1));
    const State6 k3 = rhs(ts + c3 * hs, y + hs * (a31 * k1 + a32 * k2));
    const State6 k4 = rhs(ts + c4 * hs, y + hs * (a41 * k1 + a42 * k2 + a43 * k3));
    const State6 k5 = rhs(ts + c5 * hs, y + hs * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    const State6 k6 =
        rhs(ts + hs, y + hs * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    const State6 y_new = y + hs * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const State6 k7 = rhs(ts + hs, y_new);
    const State6 err = hs * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    int worst = 0;
    double worst_ratio = -1.0;
    for (int i = 0; i < 6; ++i) {
      const double scale = atol[i] + config_.rel_tol * std::max(std::abs(y[i]), std::abs(y_new[i]));
      const double ratio = std::abs(err[i]) / scale;
      if (ratio > worst_ratio) {
        worst_ratio = ratio;
        worst = i;
      }
    }
    // Max norm: every component must meet its own tolerance.
    const double err_norm =
        err.allFinite() ? worst_ratio : std::numeric_limits<double>::infinity();

    bool energy_ok = true;
    if (check_energy && y_new.allFinite() && hs > config_.min_step) {
      energy_ok = energy_of(y_new) <= energy_of(y);
    }
    if (err_norm <= 1.0 && y_new.allFinite() && energy_ok) {
      y = y_new;
      k1 = k7;
      t = last ? dt : t + hs;
      ++stats_.accepted;
      const double factor =
          err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
      // Keep the controller's proposal rather than the clipped final step.
      h = std::max(h, hs) * factor;
      if (last) break;
    } else {
      ++stats_.rejected;
      const double factor = !std::isfinite(err_norm) ? 0.2
                            : err_norm <= 1.0        ? 0.5
                                                     : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 1.0);
      h = hs * factor;
      if (err_norm <= 1.0 && y_new.allFinite()) {
        h = std::max(h, config_.min_step);
      } else if (h < config_.min_step) {
        throw IntegrationError(std::string("step size underflow on component ") +
                                   component_name(worst) + " at t=" + std::to_string(ts),
                               component_name(worst), ts);
      }
    }
  }
  h_ = std::min(h, config_.max_step);

  ParticleState out;
  out.position = y.head<3>();
  out.velocity = y.tail<3>();
  out.time = t0 + dt;
  out.escaped = escaped || !model_.volume.contains(out.position, model_.escape_margin);
  return out;
}

ParticleState step(const ParticleState& state, const Vec3& trap_position, const TrapModel& model,
                   const IntegratorConfig& config, double dt) {
  Stepper stepper(model, config);
  return stepper.advance(state, trap_position, dt);
}

std::vector<ParticleState> simulate_trajectory(const ParticleState& initial,
                                               const TrapSchedule& schedule,
                                               const TrapModel& model,
                                               const IntegratorConfig& config, double duration,
                                               double sample_rate) {
  if (!(duration >= 0.0) || !(sample_rate > 0.0)) {
    throw std::invalid_argument("duration must be >= 0 and sample rate > 0");
  }
  const double t_begin = initial.time;
  if (!schedule.covers(t_begin, t_begin + duration)) {
    throw std::invalid_argument("trap schedule does not cover the simulated interval");
  }
  const auto n = static_cast<long>(std::floor(duration * sample_rate + 1e-9));

  // Breakpoints: sample instants plus schedule knots, so the trap path is
  // linear within every advance() call.
  std::vector<double> breaks;
  breaks.reserve(static_cast<std::size_t>(n) + schedule.samples().size() + 1);
  for (long i = 0; i <= n; ++i) breaks.push_back(t_begin + static_cast<double>(i) / sample_rate);
  for (const auto& s : schedule.samples()) {
    if (s.time > t_begin && s.time < breaks.back()) breaks.push_back(s.time);
  }
  std::sort(breaks.begin(), breaks.end());

  Stepper stepper(model, config);
  std::vector<ParticleState> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  ParticleState state = initial;
  out.push_back(state);
  long next_sample = 1;
  for (std::size_t i = 1; i < breaks.size(); ++i) {
    const double a = breaks[i - 1];
    const double b = breaks[i];
    if (b - a <= 0.0) continue;
    state.time = a;
    state = stepper.advance(state, schedule.at(a), schedule.at(b), b - a);
    state.time = b;
    if (next_sample <= n && b == t_begin + static_cast<double>(next_sample) / sample_rate) {
      out.push_back(state);
      ++next_sample;
    }
  }
  return out;
}

void write_trajectory_csv(std::ostream& out, const std::vector<ParticleState>& samples,
                          const TrapSchedule& schedule) {
  out << "t_s,x_m,y_m,z_m,vx,vy,vz,trap_x,trap_y,trap_z\n";
  std::string line;
  for (const auto& s : samples) {
    line.clear();
    csv::append_double(line, s.time);
    const Vec3 trap = schedule.at(s.time);
    for (const Vec3* v : {&s.position, &s.velocity, &trap}) {
      for (int i = 0; i < 3; ++i) {
        line += ',';
        csv::append_double(line, (*v)[i]);
      }
    }
    line += '\n';
    out << line;
  }
}

}  // namespace levisim::dynamics
