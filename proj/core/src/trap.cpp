#include "levisim/trap.hpp"

#include "levisim/csv.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

namespace levisim::acoustics {

Vec3 force_from_potential(const PotentialFn& potential, const Vec3& point, double h) {
  Vec3 f;
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 offset = Vec3::Zero();
    offset[axis] = h;
    f[axis] = -(potential(point + offset) - potential(point - offset)) / (2.0 * h);
  }
  return f;
}

namespace {

struct SideScan {
  double radius = 0.0;
  double max_force = 0.0;
  double max_offset = 0.0;
  bool bounded = false;
};

// Restoring component along `dir` (negative while the force points back).
double axial(const ForceFn& force, const Vec3& center, int axis, double dir, double d) {
  Vec3 p = center;
  p[axis] += dir * d;
  return dir * force(p)[axis];
}

SideScan scan_side(const ForceFn& force, const Vec3& center, const Box& volume, int axis,
                   double dir, double step) {
  SideScan out;
  // Restoring magnitudes at d = 0, step, 2 step, ... inside the trap.
  std::vector<double> mags{0.0};
  double prev_f = 0.0;
  bool crossed = false;
  for (int i = 1;; ++i) {
    const double d = i * step;
    Vec3 p = center;
    p[axis] += dir * d;
    if (!volume.contains(p)) break;
    const double f = axial(force, center, axis, dir, d);
    if (f >= 0.0) {
      out.radius = (i - 1) * step + step * (-prev_f) / (f - prev_f);
      crossed = true;
      break;
    }
    mags.push_back(-f);
    prev_f = f;
  }
  if (!crossed) {
    out.radius = (mags.size() - 1) * step;
    out.bounded = true;
  }
  const auto best = static_cast<std::size_t>(
      std::distance(mags.begin(), std::max_element(mags.begin(), mags.end())));
  out.max_force = mags[best];
  out.max_offset = dir * best * step;
  // Parabolic vertex through the maximum and its two neighbours.
  if (best >= 1 && best + 1 < mags.size()) {
    const double a = mags[best - 1], b = mags[best], c = mags[best + 1];
    const double denom = a - 2.0 * b + c;
    if (denom < 0.0) {
      const double d = (best + 0.5 * (a - c) / denom) * step;
      const double refined = -axial(force, center, axis, dir, d);
      if (refined > out.max_force) {
        out.max_force = refined;
        out.max_offset = dir * d;
      }
    }
  }
  return out;
}

}  // namespace

TrapCharacterization characterize_trap(const ForceFn& force, const Vec3& center,
                                       const Box& scan_volume, double scan_step) {
  if (!(scan_step > 0.0)) throw std::invalid_argument("scan step must be positive");
  TrapCharacterization c;
  c.center = center;
  for (int axis = 0; axis < 3; ++axis) {
    const SideScan plus = scan_side(force, center, scan_volume, axis, +1.0, scan_step);
    const SideScan minus = scan_side(force, center, scan_volume, axis, -1.0, scan_step);
    c.radius_plus[axis] = plus.radius;
    c.radius_minus[axis] = minus.radius;
    c.diameters[axis] = plus.radius + minus.radius;
    c.volume_bounded[axis] = plus.bounded || minus.bounded;
    if (plus.max_force >= minus.max_force) {
      c.max_force[axis] = plus.max_force;
      c.max_force_offset[axis] = plus.max_offset;
    } else {
      c.max_force[axis] = minus.max_force;
      c.max_force_offset[axis] = minus.max_offset;
    }
  }
  return c;
}

TrapCharacterization characterize_trap(const AcousticField& field, const Vec3& center,
                                       double scan_step) {
  const ForceFn force = [&field](const Vec3& p) { return field.force(p); };
  return characterize_trap(force, center, field.volume(), scan_step);
}

LinearFit fit_linear_stiffness(const ForceFn& force, const Vec3& center, const Vec3& radii,
                               double window_fraction, int samples) {
  if (samples < 3) throw std::invalid_argument("need at least 3 fit samples");
  LinearFit fit;
  for (int axis = 0; axis < 3; ++axis) {
    const double w = window_fraction * radii[axis];
    if (!(w > 0.0)) {
      throw DegenerateTrapError(axis, std::string("zero-width fit window on axis ") + axis_name(axis));
    }
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    std::vector<double> xs(samples), ys(samples);
    for (int j = 0; j < samples; ++j) {
      const double s = -w + 2.0 * w * j / (samples - 1);
      Vec3 p = center;
      p[axis] += s;
      xs[j] = s;
      ys[j] = force(p)[axis];
      sx += s;
      sy += ys[j];
      sxx += s * s;
      sxy += s * ys[j];
    }
    const double n = samples;
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double intercept = (sy - slope * sx) / n;
    double ss = 0.0;
    double max_abs = 0.0;
    for (int j = 0; j < samples; ++j) {
      const double r = ys[j] - (intercept + slope * xs[j]);
      ss += r * r;
      max_abs = std::max(max_abs, std::abs(ys[j]));
    }
    fit.stiffness[axis] = -slope;
    fit.intercept[axis] = intercept;
    fit.residual_rms[axis] = std::sqrt(ss / n);
    fit.max_abs_force[axis] = max_abs;
    fit.half_window[axis] = w;
    if (!(fit.stiffness[axis] > 0.0)) {
      throw DegenerateTrapError(axis, std::string("non-restoring trap axis ") + axis_name(axis));
    }
  }
  return fit;
}

LinearFit linearize_trap_detailed(const AcousticField& field, const Vec3& center,
                                  double window_fraction) {
  const auto c = characterize_trap(field, center);
  const ForceFn force = [&field](const Vec3& p) { return field.force(p); };
  return fit_linear_stiffness(force, center, c.radii(), window_fraction);
}

Vec3 linearize_trap(const AcousticField& field, const Vec3& center) {
  return linearize_trap_detailed(field, center).stiffness;
}

bool is_local_minimum(const AcousticField& field, const Vec3& center, double h) {
  const double u0 = field.potential(center);
  for (int axis = 0; axis < 3; ++axis) {
    for (double dir : {-1.0, 1.0}) {
      Vec3 p = center;
      p[axis] += dir * h;
      if (!(field.potential(p) > u0)) return false;
    }
  }
  return true;
}

Vec3 locate_trap(const AcousticField& field, const Vec3& focus) {
  const double lambda = field.wavelength();
  const int samples = 400;
  std::vector<double> ys(samples + 1), us(samples + 1);
  for (int i = 0; i <= samples; ++i) {
    ys[i] = -0.5 * lambda + lambda * i / samples;
    us[i] = field.potential(focus + Vec3(0.0, ys[i], 0.0));
  }
  int best = -1;
  for (int i = 1; i < samples; ++i) {
    if (!(us[i] < us[i - 1] && us[i] <= us[i + 1])) continue;
    if (best < 0) {
      best = i;
      continue;
    }
    const double tol = 1e-9 * std::max(std::abs(us[i]), std::abs(us[best]));
    if (us[i] < us[best] - tol) {
      best = i;
    } else if (std::abs(us[i] - us[best]) <= tol) {
      // Tie: nearest to the focus, then the lower one.
      const double di = std::abs(ys[i]);
      const double db = std::abs(ys[best]);
      if (di < db - 1e-12 || (std::abs(di - db) <= 1e-12 && ys[i] < ys[best])) best = i;
    }
  }
  if (best < 0) throw DegenerateTrapError(1, "no potential minimum near the focus");

  // Newton iteration on F(x) = 0 with a finite-difference Jacobian.
  Vec3 x = focus + Vec3(0.0, ys[best], 0.0);
  const double h = field.fd_step();
  for (int iter = 0; iter < 40; ++iter) {
    const Vec3 f = field.force_with_step(x, h);
    Eigen::Matrix3d jac;
    for (int j = 0; j < 3; ++j) {
      Vec3 off = Vec3::Zero();
      off[j] = h;
      jac.col(j) = (field.force_with_step(x + off, h) - field.force_with_step(x - off, h)) / (2.0 * h);
    }
    const Vec3 dx = jac.fullPivLu().solve(-f);
    if (!dx.allFinite() || dx.norm() > 0.25 * lambda) {
      throw DegenerateTrapError(1, "trap refinement diverged");
    }
    x += dx;
    if (dx.norm() < 1e-13) break;
  }
  if (!is_local_minimum(field, x, h)) {
    throw DegenerateTrapError(1, "refined point is not a potential minimum");
  }
  return x;
}

double calibrate_amplitude(const AcousticField& field, const Vec3& trap_center,
                           double target_max_y_force, double scan_step) {
  if (!(target_max_y_force > 0.0) || !std::isfinite(target_max_y_force)) {
    throw std::invalid_argument("calibration target force must be positive");
  }
  const auto c = characterize_trap(field, trap_center, scan_step);
  const double current = c.max_force.y();
  if (!(current > 0.0)) throw DegenerateTrapError(1, "no vertical restoring force to calibrate");
  const double amplitude = field.array().transducers().front().amplitude;
  return amplitude * std::sqrt(target_max_y_force / current);
}

TrapSetup build_trap(const FieldConfig& config) {
  auto array = TransducerArray::opposed_grids(config.geometry);
  array = focus_array(array, config.focus);
  AcousticField field(array, config.medium, config.fd_step);
  const Vec3 center = locate_trap(field, config.focus);
  if (config.calibration_target_force > 0.0) {
    const double amplitude = calibrate_amplitude(field, center, config.calibration_target_force);
    field = AcousticField(field.array().with_amplitude(amplitude), field.medium(), field.fd_step());
  }
  auto characterization = characterize_trap(field, center);
  const ForceFn force = [&field](const Vec3& p) { return field.force(p); };
  characterization.stiffness =
      fit_linear_stiffness(force, center, characterization.radii()).stiffness;
  return TrapSetup{std::move(field), config.focus, center, characterization};
}

void write_force_profile(std::ostream& out, const AcousticField& field, const Vec3& center,
                         double half_range, double step) {
  if (!(step > 0.0) || !(half_range >= 0.0)) throw std::invalid_argument("bad sweep range");
  out << "axis,displacement_m,Fx_N,Fy_N,Fz_N\n";
  const int n = static_cast<int>(std::floor(half_range / step + 1e-9));
  std::string line;
  for (int axis = 0; axis < 3; ++axis) {
    for (int i = -n; i <= n; ++i) {
      const double d = i * step;
      Vec3 p = center;
      p[axis] += d;
      if (!field.volume().contains(p)) continue;
      const Vec3 f = field.force(p);
      line.clear();
      line += axis_name(axis);
      line += ',';
      csv::append_double(line, d);
      for (int k = 0; k < 3; ++k) {
        line += ',';
        csv::append_double(line, f[k]);
      }
      line += '\n';
      out << line;
    }
  }
}

}  // namespace levisim::acoustics
