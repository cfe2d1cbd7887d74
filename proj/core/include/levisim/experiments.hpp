#pragma once

#include "levisim/common.hpp"
#include "levisim/session_log.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace levisim::experiments {

enum class Direction { left_right, front_back };

const char* to_string(Direction d);
Direction direction_from_string(std::string_view s);

/// Reciprocal pointing between two invisible spherical targets of diameter W.
struct PointingTask {
  std::string name;
  Vec3 target_a = Vec3::Zero();
  Vec3 target_b = Vec3::Zero();
  double width = 0.0;      // sphere diameter (m)
  double amplitude = 0.0;  // center distance D (m)
  Direction direction = Direction::left_right;
  int repetitions = 70;
  /// Per-session calibration shift applied to both target centers.
  Vec3 target_offset = Vec3::Zero();

  /// Targets placed symmetrically about `center` along x (left-right) or z (front-back).
  static PointingTask centered(std::string name, const Vec3& center, double amplitude,
                               double width, Direction direction, int repetitions = 70);

  Vec3 target(int index) const { return (index == 0 ? target_a : target_b) + target_offset; }
  /// Throws std::invalid_argument when D, W or the geometry are inconsistent.
  void validate(const Box& volume) const;
};

/// Shannon formulation: log2(D/W + 1) bits.
double index_of_difficulty(double amplitude, double width);

/// Alternating-target hit state machine (A first). A hit fires on the first
/// frame whose particle center lies within W/2 (closed ball) of the current target.
class HitDetector {
 public:
  explicit HitDetector(const PointingTask& task) : task_(task) {}

  /// Returns 'A' or 'B' when this frame produced a hit.
  std::optional<char> observe(const Vec3& particle, std::uint64_t frame_us);
  int current_target() const { return current_; }
  std::size_t hits() const { return hits_; }

 private:
  PointingTask task_;
  int current_ = 0;
  std::size_t hits_ = 0;
};

struct HitDetection {
  std::vector<std::uint64_t> hit_times_us;
  std::vector<char> hit_targets;
  std::vector<double> movement_times_s;
};

/// Throws std::invalid_argument for an empty frame list.
HitDetection detect_hits(std::span<const session::FrameRecord> frames, const PointingTask& task);
/// Uses the "hit:A"/"hit:B" tags of the event column instead of positions.
HitDetection hits_from_events(std::span<const session::FrameRecord> frames);

struct TrialSummary {
  std::string condition;
  int participant = 0;
  double id_bits = 0.0;
  double mean_mt_s = 0.0;
  std::size_t used = 0;
  std::size_t discarded = 0;
};

inline constexpr std::size_t kDiscardedMovements = 20;

/// Drops the first 20 movements and averages the rest. Throws
/// InsufficientDataError with 20 or fewer movements.
TrialSummary summarize_trial(std::span<const double> movement_times_s, const PointingTask& task,
                             int participant = 0);

struct IdGroup {
  double id_bits = 0.0;
  double mean_mt_s = 0.0;
  std::size_t trials = 0;
  std::size_t used = 0;       // movements summed over trials
  std::size_t discarded = 0;
};

/// Groups trials by ID (within `tolerance` bits). Within a group, trials are
/// first averaged per participant and the group mean is the mean of those.
std::vector<IdGroup> group_by_id(std::span<const TrialSummary> trials, double tolerance = 1e-6);

struct FittsModel {
  double intercept_s = 0.0;
  double slope_s_per_bit = 0.0;
  double r2 = 0.0;
  double throughput_bits_per_s = 0.0;
};

/// OLS of group mean MT on group ID. Throws InsufficientDataError for < 2 groups.
FittsModel fit_fitts(std::span<const IdGroup> groups);
/// Mean over groups of ID / MT.
double throughput(std::span<const IdGroup> groups);

/// Balanced (Williams) Latin square row for `participant`, over `conditions` items.
std::vector<std::size_t> generate_condition_schedule(std::size_t conditions, int participant);

/// 2 directions x 3 widths at 5 cm amplitude, centered at `center`.
std::vector<PointingTask> default_conditions(const Vec3& center = Vec3::Zero());

// Condition config JSON and analysis outputs.
struct ConditionEntry {
  PointingTask task;
  std::string log;
  int participant = 0;
};

PointingTask task_from_json(const nlohmann::json& j);
nlohmann::json task_to_json(const PointingTask& task);
std::vector<ConditionEntry> conditions_from_json(const nlohmann::json& doc);

void write_trials_csv(std::ostream& out, std::span<const TrialSummary> trials);
void write_groups_csv(std::ostream& out, std::span<const IdGroup> groups);
void write_model_csv(std::ostream& out, const FittsModel& model);

}  // namespace levisim::experiments
