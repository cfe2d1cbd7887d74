#pragma once

#include "levisim/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <complex>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace levisim::acoustics {

/// One emitter of a phased array. Amplitude is the on-axis pressure at 1 m (Pa·m).
struct Transducer {
  Vec3 position = Vec3::Zero();
  Vec3 normal = Vec3::UnitY();
  double phase = 0.0;
  double amplitude = 1.0;
};

/// Layout parameters of the two opposed rectangular grids. The grids lie in
/// x-z planes at y = center.y -/+ separation/2 and face each other along y.
struct ArrayGeometry {
  int columns = 14;  // along x
  int rows = 9;      // along z
  double pitch = 0.0105;
  double separation = 0.18;
  double frequency = 40000.0;
  double sound_speed = 343.0;
  double emitter_radius = 0.0045;
  double amplitude = 1.0;
  Vec3 center = Vec3::Zero();
  Box volume = default_levitation_volume();
};

class TransducerArray {
 public:
  TransducerArray(std::vector<Transducer> transducers, double frequency,
                  double sound_speed, double emitter_radius, Box volume,
                  double pitch = 0.0);

  /// Two opposed columns x rows grids; validates the opposed-layout invariants.
  static TransducerArray opposed_grids(const ArrayGeometry& geometry);

  const std::vector<Transducer>& transducers() const { return transducers_; }
  std::size_t size() const { return transducers_.size(); }
  double frequency() const { return frequency_; }
  double sound_speed() const { return sound_speed_; }
  double emitter_radius() const { return emitter_radius_; }
  double pitch() const { return pitch_; }
  const Box& volume() const { return volume_; }
  double wavelength() const { return sound_speed_ / frequency_; }
  double wavenumber() const;

  /// Throws std::invalid_argument unless the array is exactly two
  /// `columns x rows` grids with antiparallel normals.
  void validate_opposed_layout(int columns = 14, int rows = 9) const;

  TransducerArray with_phases(std::span<const double> phases) const;
  TransducerArray with_amplitude(double amplitude) const;
  TransducerArray scaled(double amplitude_factor) const;
  /// Reflection of every emitter across the plane x = plane_x.
  TransducerArray mirrored_x(double plane_x) const;

 private:
  std::vector<Transducer> transducers_;
  double frequency_;
  double sound_speed_;
  double emitter_radius_;
  double pitch_;
  Box volume_;
};

/// Host medium (air) and the levitated bead (expanded polystyrene by default).
struct MediumAndParticle {
  double sound_speed_air = 343.0;
  double air_density = 1.18;
  double particle_sound_speed = 2400.0;
  double particle_density = 25.0;
  double particle_radius = 0.001;

  double particle_volume() const;
  double particle_mass() const { return particle_density * particle_volume(); }
  /// Throws std::invalid_argument for non-positive constants. Returns false
  /// when the particle is not small against the wavelength (radius >= lambda/10).
  bool validate(double wavelength) const;
};

struct GorkovCoefficients {
  double monopole;  // multiplies |p|^2
  double dipole;    // multiplies |grad p|^2
};

GorkovCoefficients gorkov_coefficients(const MediumAndParticle& medium, double frequency);

/// Far-field circular piston directivity 2 J1(x) / x for x = k a sin(theta).
double piston_directivity(double k_a_sin_theta);

/// Evaluates pressure, Gor'kov potential and radiation force of an array.
/// Immutable after construction; safe to share across threads.
class AcousticField {
 public:
  /// `fd_step` <= 0 selects lambda/100.
  AcousticField(TransducerArray array, MediumAndParticle medium, double fd_step = 0.0);

  std::complex<double> pressure(const Vec3& point) const;
  double potential(const Vec3& point) const;
  /// -grad U by central differences. Throws OutOfBoundsError outside the volume.
  Vec3 force(const Vec3& point) const;
  /// Same as force() with a caller-chosen difference step and no volume check.
  Vec3 force_with_step(const Vec3& point, double step) const;

  const TransducerArray& array() const { return array_; }
  const MediumAndParticle& medium() const { return medium_; }
  const Box& volume() const { return array_.volume(); }
  double fd_step() const { return step_; }
  double wavelength() const { return array_.wavelength(); }
  GorkovCoefficients coefficients() const { return coeffs_; }
  bool small_particle() const { return small_particle_; }

  AcousticField scaled(double amplitude_factor) const;

  /// Minimum allowed distance between an evaluation point and any emitter.
  static constexpr double kMinEmitterDistance = 1e-3;

 private:
  double potential_with_step(const Vec3& point, double step) const;

  TransducerArray array_;
  MediumAndParticle medium_;
  GorkovCoefficients coeffs_;
  double step_;
  double k_;
  double ka_;
  bool small_particle_;
  std::vector<std::complex<double>> weights_;  // amplitude * exp(i phase)
};

/// Phase per transducer that aligns every contribution at `focus`.
/// Throws OutOfBoundsError unless focus is strictly inside the volume.
std::vector<double> compute_focus_phases(const TransducerArray& array, const Vec3& focus);
TransducerArray focus_array(const TransducerArray& array, const Vec3& focus);

std::complex<double> complex_pressure(const TransducerArray& array, const Vec3& point);
double gorkov_potential(const TransducerArray& array, const MediumAndParticle& medium,
                        const Vec3& point);
Vec3 acoustic_force(const TransducerArray& array, const MediumAndParticle& medium,
                    const Vec3& point);

/// Parses an array/medium configuration document. Fields are optional and
/// default to the values of ArrayGeometry / MediumAndParticle.
struct FieldConfig {
  ArrayGeometry geometry;
  MediumAndParticle medium;
  Vec3 focus = Vec3::Zero();
  double fd_step = 0.0;
  /// When positive, the amplitude is calibrated to this max vertical force (N).
  double calibration_target_force = 2.2e-4;
};

FieldConfig field_config_from_json(const nlohmann::json& doc);
nlohmann::json field_config_to_json(const FieldConfig& config);
FieldConfig load_field_config(const std::string& path);

}  // namespace levisim::acoustics
