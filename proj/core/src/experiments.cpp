#include "levisim/experiments.hpp"

#include "levisim/csv.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace levisim::experiments {

const char* to_string(Direction d) {
  return d == Direction::left_right ? "left-right" : "front-back";
}

Direction direction_from_string(std::string_view s) {
  if (s == "left-right") return Direction::left_right;
  if (s == "front-back") return Direction::front_back;
  throw std::invalid_argument("unknown direction '" + std::string(s) + "'");
}

PointingTask PointingTask::centered(std::string name, const Vec3& center, double amplitude,
                                    double width, Direction direction, int repetitions) {
  PointingTask t;
  t.name = std::move(name);
  const Vec3 axis = direction == Direction::left_right ? Vec3::UnitX() : Vec3::UnitZ();
  t.target_a = center - 0.5 * amplitude * axis;
  t.target_b = center + 0.5 * amplitude * axis;
  t.width = width;
  t.amplitude = amplitude;
  t.direction = direction;
  t.repetitions = repetitions;
  return t;
}

void PointingTask::validate(const Box& volume) const {
  if (!(amplitude > 0.0)) throw std::invalid_argument("target amplitude must be positive");
  if (!(width > 0.0)) throw std::invalid_argument("target width must be positive");
  if (std::abs((target_a - target_b).norm() - amplitude) > 1e-9) {
    throw std::invalid_argument("target distance does not match the amplitude");
  }
  for (int i = 0; i < 2; ++i) {
    const Vec3 c = target(i);
    const Vec3 r = Vec3::Constant(0.5 * width);
    if (!volume.contains(c - r) || !volume.contains(c + r)) {
      throw std::invalid_argument("target sphere leaves the levitation volume");
    }
  }
}

double index_of_difficulty(double amplitude, double width) {
  if (!(width > 0.0)) throw std::invalid_argument("target width must be positive");
  if (!(amplitude >= 0.0)) throw std::invalid_argument("amplitude must be >= 0");
  return std::log2(amplitude / width + 1.0);
}

std::optional<char> HitDetector::observe(const Vec3& particle, std::uint64_t) {
  const double r = 0.5 * task_.width;
  if ((particle - task_.target(current_)).squaredNorm() <= r * r) {
    const char label = current_ == 0 ? 'A' : 'B';
    current_ = 1 - current_;
    ++hits_;
    return label;
  }
  return std::nullopt;
}

namespace {

HitDetection with_durations(HitDetection d) {
  for (std::size_t i = 1; i < d.hit_times_us.size(); ++i) {
    d.movement_times_s.push_back(1e-6 *
                                 static_cast<double>(d.hit_times_us[i] - d.hit_times_us[i - 1]));
  }
  return d;
}

}  // namespace

HitDetection detect_hits(std::span<const session::FrameRecord> frames, const PointingTask& task) {
  if (frames.empty()) throw std::invalid_argument("no frames to analyse");
  HitDetector detector(task);
  HitDetection d;
  for (const auto& f : frames) {
    if (auto hit = detector.observe(f.particle, f.frame_us)) {
      d.hit_times_us.push_back(f.frame_us);
      d.hit_targets.push_back(*hit);
    }
  }
  return with_durations(std::move(d));
}

HitDetection hits_from_events(std::span<const session::FrameRecord> frames) {
  HitDetection d;
  for (const auto& f : frames) {
    if (f.has_event("hit:A")) {
      d.hit_times_us.push_back(f.frame_us);
      d.hit_targets.push_back('A');
    } else if (f.has_event("hit:B")) {
      d.hit_times_us.push_back(f.frame_us);
      d.hit_targets.push_back('B');
    }
  }
  return with_durations(std::move(d));
}

TrialSummary summarize_trial(std::span<const double> movement_times_s, const PointingTask& task,
                             int participant) {
  if (movement_times_s.size() <= kDiscardedMovements) {
    throw InsufficientDataError("trial has " + std::to_string(movement_times_s.size()) +
                                " movements; need more than " +
                                std::to_string(kDiscardedMovements));
  }
  const auto kept = movement_times_s.subspan(kDiscardedMovements);
  TrialSummary s;
  s.condition = task.name;
  s.participant = participant;
  s.id_bits = index_of_difficulty(task.amplitude, task.width);
  s.mean_mt_s = std::accumulate(kept.begin(), kept.end(), 0.0) / static_cast<double>(kept.size());
  s.used = kept.size();
  s.discarded = kDiscardedMovements;
  return s;
}

std::vector<IdGroup> group_by_id(std::span<const TrialSummary> trials, double tolerance) {
  struct Acc {
    double id_sum = 0.0;
    std::size_t trials = 0;
    std::size_t used = 0;
    std::size_t discarded = 0;
    std::map<int, std::pair<double, std::size_t>> per_participant;  // mt sum, count
  };
  std::vector<std::pair<double, Acc>> groups;  // keyed by first ID seen
  for (const auto& t : trials) {
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
      return std::abs(g.first - t.id_bits) <= tolerance;
    });
    if (it == groups.end()) {
      groups.emplace_back(t.id_bits, Acc{});
      it = groups.end() - 1;
    }
    it->second.id_sum += t.id_bits;
    ++it->second.trials;
    it->second.used += t.used;
    it->second.discarded += t.discarded;
    auto& p = it->second.per_participant[t.participant];
    p.first += t.mean_mt_s;
    ++p.second;
  }
  std::vector<IdGroup> out;
  for (const auto& [key, acc] : groups) {
    IdGroup g;
    g.id_bits = acc.id_sum / static_cast<double>(acc.trials);
    double sum = 0.0;
    for (const auto& [participant, p] : acc.per_participant) sum += p.first / static_cast<double>(p.second);
    g.mean_mt_s = sum / static_cast<double>(acc.per_participant.size());
    g.trials = acc.trials;
    g.used = acc.used;
    g.discarded = acc.discarded;
    out.push_back(g);
  }
  std::sort(out.begin(), out.end(), [](const IdGroup& a, const IdGroup& b) { return a.id_bits < b.id_bits; });
  return out;
}

double throughput(std::span<const IdGroup> groups) {
  if (groups.empty()) throw InsufficientDataError("no ID groups");
  double sum = 0.0;
  for (const auto& g : groups) {
    if (!(g.mean_mt_s > 0.0)) throw std::invalid_argument("movement time must be positive");
    sum += g.id_bits / g.mean_mt_s;
  }
  return sum / static_cast<double>(groups.size());
}

FittsModel fit_fitts(std::span<const IdGroup> groups) {
  if (groups.size() < 2) throw InsufficientDataError("Fitts regression needs at least 2 ID groups");
  const double n = static_cast<double>(groups.size());
  double mx = 0.0, my = 0.0;
  for (const auto& g : groups) {
    mx += g.id_bits;
    my += g.mean_mt_s;
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& g : groups) {
    const double dx = g.id_bits - mx;
    const double dy = g.mean_mt_s - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (!(sxx > 0.0)) throw InsufficientDataError("ID groups are not distinct");
  FittsModel m;
  m.slope_s_per_bit = sxy / sxx;
  m.intercept_s = my - m.slope_s_per_bit * mx;
  m.r2 = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  m.throughput_bits_per_s = throughput(groups);
  return m;
}

std::vector<std::size_t> generate_condition_schedule(std::size_t conditions, int participant) {
  if (participant < 0) throw std::invalid_argument("participant id must be >= 0");
  if (conditions == 0) return {};
  const std::size_t n = conditions;
  // First row 0, 1, n-1, 2, n-2, ...; later rows shift every entry by the row index.
  std::vector<std::size_t> first;
  first.reserve(n);
  for (std::size_t j = 0, lo = 1, hi = n - 1; j < n; ++j) {
    if (j == 0) first.push_back(0);
    else if (j % 2 == 1) first.push_back(lo++);
    else first.push_back(hi--);
  }
  const std::size_t row = static_cast<std::size_t>(participant) % n;
  std::vector<std::size_t> out;
  out.reserve(n);
  for (auto c : first) out.push_back((c + row) % n);
  return out;
}

std::vector<PointingTask> default_conditions(const Vec3& center) {
  std::vector<PointingTask> out;
  for (Direction d : {Direction::left_right, Direction::front_back}) {
    for (double w : {0.016, 0.008, 0.004}) {
      const std::string name = std::string(d == Direction::left_right ? "lr" : "fb") + "_w" +
                               std::to_string(static_cast<int>(std::lround(w * 1000)));
      out.push_back(PointingTask::centered(name, center, 0.05, w, d));
    }
  }
  return out;
}

namespace {

Vec3 vec_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

nlohmann::json vec_to(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

}  // namespace

PointingTask task_from_json(const nlohmann::json& j) {
  PointingTask t;
  t.name = j.value("name", "");
  t.width = j.at("width").get<double>();
  t.direction = direction_from_string(j.value("direction", "left-right"));
  t.repetitions = j.value("repetitions", 70);
  if (j.contains("target_a")) {
    t.target_a = vec_from(j.at("target_a"));
    t.target_b = vec_from(j.at("target_b"));
    t.amplitude = j.contains("amplitude") ? j.at("amplitude").get<double>()
                                          : (t.target_a - t.target_b).norm();
  } else {
    const Vec3 center = j.contains("center") ? vec_from(j.at("center")) : Vec3::Zero();
    t = PointingTask::centered(t.name, center, j.at("amplitude").get<double>(), t.width,
                               t.direction, t.repetitions);
  }
  if (j.contains("target_offset")) t.target_offset = vec_from(j.at("target_offset"));
  return t;
}

nlohmann::json task_to_json(const PointingTask& t) {
  return {{"name", t.name},
          {"target_a", vec_to(t.target_a)},
          {"target_b", vec_to(t.target_b)},
          {"width", t.width},
          {"amplitude", t.amplitude},
          {"direction", to_string(t.direction)},
          {"repetitions", t.repetitions},
          {"target_offset", vec_to(t.target_offset)}};
}

std::vector<ConditionEntry> conditions_from_json(const nlohmann::json& doc) {
  std::vector<ConditionEntry> out;
  for (const auto& j : doc.at("conditions")) {
    ConditionEntry e;
    e.task = task_from_json(j);
    e.log = j.value("log", "");
    e.participant = j.value("participant", 0);
    out.push_back(std::move(e));
  }
  return out;
}

void write_trials_csv(std::ostream& out, std::span<const TrialSummary> trials) {
  out << "condition,id_bits,mean_mt_s,n_used,n_discarded\n";
  for (const auto& t : trials) {
    out << t.condition << ',' << csv::format_double(t.id_bits) << ','
        << csv::format_double(t.mean_mt_s) << ',' << t.used << ',' << t.discarded << '\n';
  }
}

void write_groups_csv(std::ostream& out, std::span<const IdGroup> groups) {
  out << "condition,id_bits,mean_mt_s,n_used,n_discarded\n";
  for (const auto& g : groups) {
    out << "id_" << csv::format_double(g.id_bits) << ',' << csv::format_double(g.id_bits) << ','
        << csv::format_double(g.mean_mt_s) << ',' << g.used << ',' << g.discarded << '\n';
  }
}

void write_model_csv(std::ostream& out, const FittsModel& m) {
  out << "a_s,b_s_per_bit,r2,tp_bits_per_s\n"
      << csv::format_double(m.intercept_s) << ',' << csv::format_double(m.slope_s_per_bit) << ','
      << csv::format_double(m.r2) << ',' << csv::format_double(m.throughput_bits_per_s) << '\n';
}

}  // namespace levisim::experiments
