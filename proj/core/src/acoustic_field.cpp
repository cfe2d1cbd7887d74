#include "levisim/acoustic_field.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

namespace levisim::acoustics {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_phase(double phase) {
  double wrapped = std::fmod(phase, kTwoPi);
  if (wrapped < 0.0) wrapped += kTwoPi;
  if (wrapped >= kTwoPi) wrapped = 0.0;
  return wrapped;
}

void require_positive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument(std::string(name) + " must be positive and finite");
  }
}

}  // namespace

TransducerArray::TransducerArray(std::vector<Transducer> transducers, double frequency,
                                 double sound_speed, double emitter_radius, Box volume,
                                 double pitch)
    : transducers_(std::move(transducers)),
      frequency_(frequency),
      sound_speed_(sound_speed),
      emitter_radius_(emitter_radius),
      pitch_(pitch),
      volume_(volume) {
  require_positive(frequency_, "frequency");
  require_positive(sound_speed_, "sound speed");
  if (emitter_radius_ < 0.0) throw std::invalid_argument("emitter radius must be >= 0");
  if (transducers_.empty()) throw std::invalid_argument("array has no transducers");
  for (auto& t : transducers_) {
    if (std::abs(t.normal.norm() - 1.0) > 1e-9) {
      throw std::invalid_argument("transducer normal must be a unit vector");
    }
    require_positive(t.amplitude, "transducer amplitude");
    if (!all_finite(t.position)) throw std::invalid_argument("transducer position not finite");
    t.phase = wrap_phase(t.phase);
  }
}

TransducerArray TransducerArray::opposed_grids(const ArrayGeometry& g) {
  if (g.columns <= 0 || g.rows <= 0) throw std::invalid_argument("grid dimensions must be positive");
  require_positive(g.pitch, "pitch");
  require_positive(g.separation, "separation");
  std::vector<Transducer> out;
  out.reserve(static_cast<std::size_t>(2 * g.columns * g.rows));
  // Bottom grid faces +y, top grid faces -y.
  for (int side = 0; side < 2; ++side) {
    const double y = g.center.y() + (side == 0 ? -0.5 : 0.5) * g.separation;
    const Vec3 normal = side == 0 ? Vec3::UnitY() : Vec3(-Vec3::UnitY());
    for (int c = 0; c < g.columns; ++c) {
      for (int r = 0; r < g.rows; ++r) {
        Transducer t;
        t.position = Vec3(g.center.x() + (c - 0.5 * (g.columns - 1)) * g.pitch, y,
                          g.center.z() + (r - 0.5 * (g.rows - 1)) * g.pitch);
        t.normal = normal;
        t.amplitude = g.amplitude;
        out.push_back(t);
      }
    }
  }
  TransducerArray array(std::move(out), g.frequency, g.sound_speed, g.emitter_radius,
                        g.volume, g.pitch);
  array.validate_opposed_layout(g.columns, g.rows);
  return array;
}

double TransducerArray::wavenumber() const { return kTwoPi * frequency_ / sound_speed_; }

void TransducerArray::validate_opposed_layout(int columns, int rows) const {
  const std::size_t per_grid = static_cast<std::size_t>(columns * rows);
  if (transducers_.size() != 2 * per_grid) {
    throw std::invalid_argument("opposed layout needs exactly 2 x " + std::to_string(per_grid) +
                                " transducers, got " + std::to_string(transducers_.size()));
  }
  const Vec3 n0 = transducers_.front().normal;
  const Vec3 n1 = transducers_.back().normal;
  for (std::size_t i = 0; i < transducers_.size(); ++i) {
    const Vec3& expected = i < per_grid ? n0 : n1;
    if ((transducers_[i].normal - expected).norm() > 1e-9) {
      throw std::invalid_argument("grid normals are not uniform");
    }
  }
  // Antiparallel within 1e-6 rad.
  const double angle = std::acos(std::clamp(n0.dot(n1), -1.0, 1.0));
  if (std::abs(angle - std::numbers::pi) > 1e-6) {
    throw std::invalid_argument("the two grids do not face each other");
  }
}

TransducerArray TransducerArray::with_phases(std::span<const double> phases) const {
  if (phases.size() != transducers_.size()) {
    throw std::invalid_argument("phase count does not match transducer count");
  }
  TransducerArray copy = *this;
  for (std::size_t i = 0; i < phases.size(); ++i) copy.transducers_[i].phase = wrap_phase(phases[i]);
  return copy;
}

TransducerArray TransducerArray::with_amplitude(double amplitude) const {
  require_positive(amplitude, "amplitude");
  TransducerArray copy = *this;
  for (auto& t : copy.transducers_) t.amplitude = amplitude;
  return copy;
}

TransducerArray TransducerArray::scaled(double amplitude_factor) const {
  require_positive(amplitude_factor, "amplitude factor");
  TransducerArray copy = *this;
  for (auto& t : copy.transducers_) t.amplitude *= amplitude_factor;
  return copy;
}

TransducerArray TransducerArray::mirrored_x(double plane_x) const {
  TransducerArray copy = *this;
  for (auto& t : copy.transducers_) {
    t.position.x() = 2.0 * plane_x - t.position.x();
    t.normal.x() = -t.normal.x();
  }
  Box& v = copy.volume_;
  const double lo = 2.0 * plane_x - v.max.x();
  const double hi = 2.0 * plane_x - v.min.x();
  v.min.x() = lo;
  v.max.x() = hi;
  return copy;
}

double MediumAndParticle::particle_volume() const {
  return 4.0 / 3.0 * std::numbers::pi * particle_radius * particle_radius * particle_radius;
}

bool MediumAndParticle::validate(double wavelength) const {
  require_positive(sound_speed_air, "speed of sound in air");
  require_positive(air_density, "air density");
  require_positive(particle_sound_speed, "speed of sound in particle");
  require_positive(particle_density, "particle density");
  require_positive(particle_radius, "particle radius");
  return particle_radius < wavelength / 10.0;
}

GorkovCoefficients gorkov_coefficients(const MediumAndParticle& m, double frequency) {
  const double volume = m.particle_volume();
  const double omega = kTwoPi * frequency;
  GorkovCoefficients k;
  k.monopole = 0.25 * volume *
               (1.0 / (m.sound_speed_air * m.sound_speed_air * m.air_density) -
                1.0 / (m.particle_sound_speed * m.particle_sound_speed * m.particle_density));
  k.dipole = 0.75 * volume *
             ((m.particle_density - m.air_density) /
              (omega * omega * m.air_density * (2.0 * m.particle_density + m.air_density)));
  return k;
}

double piston_directivity(double x) {
  if (std::abs(x) < 1e-8) return 1.0;
  return 2.0 * std::cyl_bessel_j(1.0, x) / x;
}

AcousticField::AcousticField(TransducerArray array, MediumAndParticle medium, double fd_step)
    : array_(std::move(array)),
      medium_(medium),
      coeffs_(gorkov_coefficients(medium_, array_.frequency())),
      step_(fd_step > 0.0 ? fd_step : array_.wavelength() / 100.0),
      k_(array_.wavenumber()),
      ka_(array_.wavenumber() * array_.emitter_radius()) {
  small_particle_ = medium_.validate(array_.wavelength());
  static std::atomic<bool> warned{false};
  if (!small_particle_ && !warned.exchange(true)) {
    std::clog << "levisim: particle radius " << medium_.particle_radius
              << " m is not small against the wavelength; Gor'kov model is inaccurate\n";
  }
  if (std::abs(medium_.sound_speed_air - array_.sound_speed()) > 1e-9) {
    throw std::invalid_argument("array and medium disagree on the speed of sound");
  }
  weights_.reserve(array_.size());
  for (const auto& t : array_.transducers()) weights_.push_back(std::polar(t.amplitude, t.phase));
}

std::complex<double> AcousticField::pressure(const Vec3& point) const {
  double re = 0.0;
  double im = 0.0;
  const auto& ts = array_.transducers();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const Vec3 d = point - ts[i].position;
    const double dist = d.norm();
    if (dist <= kMinEmitterDistance) {
      throw SingularityError("evaluation point within 1 mm of transducer " + std::to_string(i));
    }
    const double cos_theta = d.dot(ts[i].normal) / dist;
    const double sin_theta = std::sqrt(std::max(0.0, 1.0 - cos_theta * cos_theta));
    const double gain = piston_directivity(ka_ * sin_theta) / dist;
    const double kd = k_ * dist;
    const double c = std::cos(kd);
    const double s = std::sin(kd);
    const auto w = weights_[i];
    re += gain * (w.real() * c - w.imag() * s);
    im += gain * (w.real() * s + w.imag() * c);
  }
  return {re, im};
}

double AcousticField::potential_with_step(const Vec3& point, double h) const {
  const auto p = pressure(point);
  double grad_sq = 0.0;
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 offset = Vec3::Zero();
    offset[axis] = h;
    const auto dp = (pressure(point + offset) - pressure(point - offset)) / (2.0 * h);
    grad_sq += std::norm(dp);
  }
  return coeffs_.monopole * std::norm(p) - coeffs_.dipole * grad_sq;
}

double AcousticField::potential(const Vec3& point) const { return potential_with_step(point, step_); }

Vec3 AcousticField::force_with_step(const Vec3& point, double h) const {
  Vec3 f;
  for (int axis = 0; axis < 3; ++axis) {
    Vec3 offset = Vec3::Zero();
    offset[axis] = h;
    f[axis] = -(potential_with_step(point + offset, h) - potential_with_step(point - offset, h)) /
              (2.0 * h);
  }
  return f;
}

Vec3 AcousticField::force(const Vec3& point) const {
  if (!volume().contains(point)) {
    throw OutOfBoundsError("force evaluated outside the levitation volume");
  }
  return force_with_step(point, step_);
}

AcousticField AcousticField::scaled(double amplitude_factor) const {
  return AcousticField(array_.scaled(amplitude_factor), medium_, step_);
}

std::vector<double> compute_focus_phases(const TransducerArray& array, const Vec3& focus) {
  if (!array.volume().strictly_contains(focus)) {
    throw OutOfBoundsError("focus lies outside the levitation volume");
  }
  const double k = array.wavenumber();
  std::vector<double> phases;
  phases.reserve(array.size());
  for (const auto& t : array.transducers()) {
    phases.push_back(wrap_phase(-k * (focus - t.position).norm()));
  }
  return phases;
}

TransducerArray focus_array(const TransducerArray& array, const Vec3& focus) {
  const auto phases = compute_focus_phases(array, focus);
  return array.with_phases(phases);
}

std::complex<double> complex_pressure(const TransducerArray& array, const Vec3& point) {
  MediumAndParticle medium;
  medium.sound_speed_air = array.sound_speed();
  return AcousticField(array, medium).pressure(point);
}

double gorkov_potential(const TransducerArray& array, const MediumAndParticle& medium,
                        const Vec3& point) {
  return AcousticField(array, medium).potential(point);
}

Vec3 acoustic_force(const TransducerArray& array, const MediumAndParticle& medium,
                    const Vec3& point) {
  return AcousticField(array, medium).force(point);
}

namespace {

Vec3 vec_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

nlohmann::json vec_to_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

}  // namespace

FieldConfig field_config_from_json(const nlohmann::json& doc) {
  FieldConfig cfg;
  auto& g = cfg.geometry;
  if (auto it = doc.find("grid"); it != doc.end()) {
    g.columns = it->value("columns", g.columns);
    g.rows = it->value("rows", g.rows);
    g.pitch = it->value("pitch", g.pitch);
    g.separation = it->value("separation", g.separation);
  }
  g.frequency = doc.value("frequency", g.frequency);
  g.emitter_radius = doc.value("emitter_radius", g.emitter_radius);
  if (auto it = doc.find("center"); it != doc.end()) g.center = vec_from_json(*it);
  if (auto it = doc.find("volume"); it != doc.end()) {
    const Vec3 size = vec_from_json(it->at("size"));
    const Vec3 center = it->contains("center") ? vec_from_json(it->at("center")) : g.center;
    g.volume = Box::centered(center, size);
  }
  auto& m = cfg.medium;
  if (auto it = doc.find("medium"); it != doc.end()) {
    m.sound_speed_air = it->value("sound_speed_air", m.sound_speed_air);
    m.air_density = it->value("air_density", m.air_density);
    m.particle_sound_speed = it->value("particle_sound_speed", m.particle_sound_speed);
    m.particle_density = it->value("particle_density", m.particle_density);
    m.particle_radius = it->value("particle_radius", m.particle_radius);
  }
  g.sound_speed = m.sound_speed_air;
  if (auto it = doc.find("focus"); it != doc.end()) cfg.focus = vec_from_json(*it);
  cfg.fd_step = doc.value("fd_step", cfg.fd_step);
  if (doc.contains("amplitude")) {
    g.amplitude = doc.at("amplitude").get<double>();
    cfg.calibration_target_force = doc.value("calibration_target_force", 0.0);
  } else {
    cfg.calibration_target_force =
        doc.value("calibration_target_force", cfg.calibration_target_force);
  }
  return cfg;
}

nlohmann::json field_config_to_json(const FieldConfig& cfg) {
  const auto& g = cfg.geometry;
  const auto& m = cfg.medium;
  nlohmann::json doc;
  doc["grid"] = {{"columns", g.columns}, {"rows", g.rows}, {"pitch", g.pitch},
                 {"separation", g.separation}};
  doc["frequency"] = g.frequency;
  doc["emitter_radius"] = g.emitter_radius;
  doc["center"] = vec_to_json(g.center);
  doc["volume"] = {{"size", vec_to_json(g.volume.size())}, {"center", vec_to_json(g.volume.center())}};
  doc["medium"] = {{"sound_speed_air", m.sound_speed_air},
                   {"air_density", m.air_density},
                   {"particle_sound_speed", m.particle_sound_speed},
                   {"particle_density", m.particle_density},
                   {"particle_radius", m.particle_radius}};
  doc["focus"] = vec_to_json(cfg.focus);
  doc["fd_step"] = cfg.fd_step;
  doc["amplitude"] = g.amplitude;
  doc["calibration_target_force"] = cfg.calibration_target_force;
  return doc;
}

FieldConfig load_field_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open field config " + path);
  return field_config_from_json(nlohmann::json::parse(in));
}

}  // namespace levisim::acoustics
