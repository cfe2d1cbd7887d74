#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace levisim {

using Vec3 = Eigen::Vector3d;

/// Axis-aligned box, used for the levitation volume and the game play volume.
struct Box {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 size() const { return max - min; }

  bool contains(const Vec3& p, double margin = 0.0) const {
    for (int i = 0; i < 3; ++i) {
      if (p[i] < min[i] - margin || p[i] > max[i] + margin) return false;
    }
    return true;
  }
  bool strictly_contains(const Vec3& p) const {
    for (int i = 0; i < 3; ++i) {
      if (!(p[i] > min[i] && p[i] < max[i])) return false;
    }
    return true;
  }
  Vec3 clamp(const Vec3& p) const { return p.cwiseMax(min).cwiseMin(max); }

  static Box centered(const Vec3& center, const Vec3& size) {
    return Box{center - 0.5 * size, center + 0.5 * size};
  }
};

/// The 14 x 10.6 x 9 cm levitation volume (x along the 14-element rows,
/// y between the arrays, z along the 9-element columns), centered at the origin.
inline Box default_levitation_volume() {
  return Box::centered(Vec3::Zero(), Vec3(0.14, 0.106, 0.09));
}

inline const char* axis_name(int axis) {
  static const char* names[] = {"x", "y", "z"};
  return (axis >= 0 && axis < 3) ? names[axis] : "?";
}

inline bool all_finite(const Vec3& v) { return v.allFinite(); }

class OutOfBoundsError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class SingularityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class DegenerateTrapError : public std::runtime_error {
 public:
  DegenerateTrapError(int axis, const std::string& what)
      : std::runtime_error(what), axis_(axis) {}
  int axis() const { return axis_; }

 private:
  int axis_;
};

class IntegrationError : public std::runtime_error {
 public:
  IntegrationError(const std::string& what, std::string component, double time)
      : std::runtime_error(what), component_(std::move(component)), time_(time) {}
  /// State component with the largest scaled error, e.g. "y" or "vy".
  const std::string& component() const { return component_; }
  double time() const { return time_; }

 private:
  std::string component_;
  double time_;
};

class InsufficientDataError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t row)
      : std::runtime_error(what), row_(row) {}
  /// 1-based line number in the source file (header is line 1).
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

}  // namespace levisim
