#pragma once

#include "levisim/acoustic_field.hpp"
#include "levisim/common.hpp"

#include <array>
#include <functional>
#include <iosfwd>

namespace levisim::acoustics {

using ForceFn = std::function<Vec3(const Vec3&)>;
using PotentialFn = std::function<double(const Vec3&)>;

/// -grad U of an arbitrary potential by central differences with step h.
Vec3 force_from_potential(const PotentialFn& potential, const Vec3& point, double h);

struct TrapCharacterization {
  Vec3 center = Vec3::Zero();
  /// Extent of the restoring region along each axis (r_minus + r_plus).
  Vec3 diameters = Vec3::Zero();
  Vec3 radius_plus = Vec3::Zero();
  Vec3 radius_minus = Vec3::Zero();
  /// Largest restoring force magnitude within the trap, per axis.
  Vec3 max_force = Vec3::Zero();
  /// Signed displacement from center where max_force occurs.
  Vec3 max_force_offset = Vec3::Zero();
  /// True when no zero crossing was found before the scan volume ended.
  std::array<bool, 3> volume_bounded{false, false, false};
  /// Filled by linearize_trap; zero until then.
  Vec3 stiffness = Vec3::Zero();

  Vec3 radii() const { return 0.5 * diameters; }
};

/// Scans outward from `center` along +/- each axis at `scan_step` until the
/// axial force component stops being restoring.
TrapCharacterization characterize_trap(const ForceFn& force, const Vec3& center,
                                       const Box& scan_volume, double scan_step = 1e-4);
TrapCharacterization characterize_trap(const AcousticField& field, const Vec3& center,
                                       double scan_step = 1e-4);

struct LinearFit {
  Vec3 stiffness = Vec3::Zero();     // F = -b x, b > 0
  Vec3 intercept = Vec3::Zero();
  Vec3 residual_rms = Vec3::Zero();
  Vec3 max_abs_force = Vec3::Zero();  // within the fit window
  Vec3 half_window = Vec3::Zero();
};

/// Least-squares line through F_axis(center + s e_axis) for s in
/// [-fraction r, +fraction r]. Throws DegenerateTrapError on a non-restoring axis.
LinearFit fit_linear_stiffness(const ForceFn& force, const Vec3& center, const Vec3& radii,
                               double window_fraction = 0.25, int samples = 21);

/// Stiffness vector of the trap at `center` (characterize, then fit over
/// +/-25% of the per-axis radius).
Vec3 linearize_trap(const AcousticField& field, const Vec3& center);
LinearFit linearize_trap_detailed(const AcousticField& field, const Vec3& center,
                                  double window_fraction = 0.25);

/// Local minimum of the Gor'kov potential nearest the focus: a scan along the
/// y axis over +/- lambda/2 followed by Newton refinement on F = 0.
Vec3 locate_trap(const AcousticField& field, const Vec3& focus);

/// True when U(center) < U(center +/- h e_axis) for all three axes.
bool is_local_minimum(const AcousticField& field, const Vec3& center, double h);

/// Common per-transducer amplitude (Pa·m) for which the max vertical restoring
/// force at the trap equals `target_max_y_force`. Force scales with amplitude^2.
double calibrate_amplitude(const AcousticField& field, const Vec3& trap_center,
                           double target_max_y_force, double scan_step = 1e-4);

/// Focused, located and calibrated default trap.
struct TrapSetup {
  AcousticField field;
  Vec3 focus;
  Vec3 center;
  TrapCharacterization characterization;
};

TrapSetup build_trap(const FieldConfig& config);

/// Writes axis, displacement_m, Fx_N, Fy_N, Fz_N rows for sweeps through
/// `center` along each axis.
void write_force_profile(std::ostream& out, const AcousticField& field, const Vec3& center,
                         double half_range, double step);

}  // namespace levisim::acoustics
