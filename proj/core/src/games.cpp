#include "levisim/games.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>

namespace levisim::games {

namespace {

constexpr double kBoundaryEps = 1e-12;
constexpr double kCooldownSnap = 1e-9;

Vec3 vec_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

void add_events(Events& into, Events more) {
  for (auto& e : more) into.push_back(std::move(e));
}

}  // namespace

void BallisticBead::validate() const {
  if (std::abs(direction.norm() - 1.0) > 1e-9) throw std::invalid_argument("bead direction must be a unit vector");
  if (!(speed >= 0.0)) throw std::invalid_argument("bead speed must be >= 0");
  if (!position.allFinite()) throw std::invalid_argument("bead position must be finite");
}

const char* to_string(GameKind kind) {
  return kind == GameKind::bead_bounce ? "beadbounce" : "levishooter";
}

GameKind game_kind_from_string(std::string_view s) {
  if (s == "beadbounce") return GameKind::bead_bounce;
  if (s == "levishooter") return GameKind::levi_shooter;
  throw std::invalid_argument("unknown game '" + std::string(s) + "'");
}

Events advance_with_walls(BallisticBead& bead, double dt, const Box& volume) {
  Events events;
  bead.position += bead.velocity() * dt;
  for (int axis = 0; axis < 3; ++axis) {
    double& p = bead.position[axis];
    const double lo = volume.min[axis];
    const double hi = volume.max[axis];
    for (int guard = 0; guard < 64 && (p > hi || p < lo); ++guard) {
      p = p > hi ? 2.0 * hi - p : 2.0 * lo - p;
      bead.direction[axis] = -bead.direction[axis];
      events.emplace_back("bounce");
    }
    p = std::clamp(p, lo, hi);
  }
  return events;
}

BounceStep bead_bounce_step(const BallisticBead& bead, const RacketPose& racket, double dt,
                            const Box& volume, const BeadBounceParams& params) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  BounceStep out;
  out.bead = bead;

  const double nn = racket.normal.norm();
  bool hit = false;
  double t_hit = 0.0;
  Vec3 n = Vec3::UnitX();
  if (nn > 1e-12 && racket.normal.allFinite()) {
    n = racket.normal / nn;
    const Vec3 c1 = racket.center;
    const Vec3 c0 = racket.center - racket.velocity * dt;
    const Vec3 p0 = bead.position;
    const Vec3 p1 = bead.position + bead.velocity() * dt;
    const double s0 = n.dot(p0 - c0);
    const double s1 = n.dot(p1 - c1);
    if ((s0 > 0.0 && s1 <= 0.0) || (s0 < 0.0 && s1 >= 0.0)) {
      t_hit = s0 / (s0 - s1);
      const Vec3 rel = (p0 - c0) + t_hit * ((p1 - c1) - (p0 - c0));
      const Vec3 in_plane = rel - n.dot(rel) * n;
      hit = in_plane.norm() <= racket.radius + kBoundaryEps;
    }
  }

  if (!hit) {
    out.events = advance_with_walls(out.bead, dt, volume);
  } else {
    add_events(out.events, advance_with_walls(out.bead, t_hit * dt, volume));
    const Vec3 d = out.bead.direction;
    const Vec3 reflected = d - 2.0 * d.dot(n) * n;
    const Vec3 push = params.kappa * racket.velocity;
    if (push.isZero(0.0)) {
      out.bead.direction = reflected.normalized();
    } else {
      const Vec3 v = out.bead.speed * reflected + push;
      const double speed = v.norm();
      out.bead.speed = speed;
      out.bead.direction = speed > 0.0 ? Vec3(v / speed) : reflected.normalized();
    }
    out.events.emplace_back("racket_hit");
    out.racket_hit = true;
    add_events(out.events, advance_with_walls(out.bead, (1.0 - t_hit) * dt, volume));
  }

  if (out.bead.position.x() > volume.center().x()) {
    out.events.emplace_back("danger_zone");
    out.danger = true;
  }
  return out;
}

bool ray_hits_sphere(const Vec3& origin, const Vec3& direction, const Vec3& center, double radius) {
  const Vec3 w = center - origin;
  const double t = w.dot(direction);
  const Vec3 closest = t > 0.0 ? Vec3(w - t * direction) : w;
  return closest.norm() <= radius + kBoundaryEps;
}

bool aim_feedback(const BallisticBead& bead, const GunPose& gun, const LeviShooterParams& params) {
  const double dn = gun.direction.norm();
  if (!(dn > 0.0)) return false;
  return ray_hits_sphere(gun.origin, gun.direction / dn, bead.position,
                         params.bead_radius + params.aim_margin);
}

double shooter_speed(const GameSession& session, const LeviShooterParams& params) {
  return params.initial_speed + params.speed_increment * (session.hits - session.reverts);
}

ShooterStep levi_shooter_step(const BallisticBead& bead, const GunPose& gun, double dt,
                              const GameSession& session, const Box& volume,
                              const LeviShooterParams& params) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  ShooterStep out{bead, session, {}};
  GameSession& s = out.session;
  out.events = advance_with_walls(out.bead, dt, volume);
  s.elapsed += dt;
  s.cooldown = std::max(0.0, s.cooldown - dt);
  if (s.cooldown < kCooldownSnap) s.cooldown = 0.0;

  const bool pressed = gun.trigger && !s.trigger_down;
  s.trigger_down = gun.trigger;
  if (!pressed) return out;
  if (s.cooldown > 0.0) {
    out.events.emplace_back("cooldown");
    return out;
  }
  if (aim_feedback(out.bead, gun, params)) {
    ++s.hits;
    ++s.score;
    s.miss_streak = 0;
    s.cooldown = params.cooldown;
    out.events.emplace_back("shot_hit");
  } else {
    ++s.miss_streak;
    out.events.emplace_back("shot_miss");
    if (s.miss_streak >= params.miss_limit) {
      s.miss_streak = 0;
      if (params.full_reset) {
        s.reverts = s.hits;
      } else if (s.hits > s.reverts) {
        ++s.reverts;
      }
    }
  }
  out.bead.speed = shooter_speed(s, params);
  return out;
}

BeadBounceGame::BeadBounceGame(Box volume, BeadBounceParams params)
    : volume_(volume), params_(params) {
  bead_.position = volume_.clamp(volume_.center() + params_.start_offset);
  bead_.direction = params_.start_direction.normalized();
  bead_.speed = params_.initial_speed;
  bead_.validate();
  session_.kind = GameKind::bead_bounce;
}

Events BeadBounceGame::tick(const RacketPose& racket, double dt) {
  if (session_.state == GameState::over) return {};
  RacketPose r = racket;
  r.radius = params_.racket_radius;
  auto step = bead_bounce_step(bead_, r, dt, volume_, params_);
  bead_ = step.bead;
  session_.elapsed += dt;
  if (step.racket_hit) {
    ++session_.hits;
    ++session_.score;
  }
  if (step.danger) session_.state = GameState::over;
  return std::move(step.events);
}

nlohmann::json BeadBounceGame::summary() const {
  return {{"game", to_string(session_.kind)},
          {"score", session_.elapsed},
          {"survival_s", session_.elapsed},
          {"racket_hits", session_.hits},
          {"elapsed_s", session_.elapsed},
          {"state", session_.state == GameState::over ? "over" : "running"},
          {"final_speed", bead_.speed}};
}

LeviShooterGame::LeviShooterGame(Box volume, LeviShooterParams params)
    : volume_(volume), params_(params) {
  bead_.position = volume_.clamp(volume_.center() + params_.start_offset);
  bead_.direction = params_.start_direction.normalized();
  bead_.speed = params_.initial_speed;
  bead_.validate();
  session_.kind = GameKind::levi_shooter;
}

Events LeviShooterGame::tick(const GunPose& gun, double dt) {
  auto step = levi_shooter_step(bead_, gun, dt, session_, volume_, params_);
  bead_ = step.bead;
  session_ = step.session;
  return std::move(step.events);
}

nlohmann::json LeviShooterGame::summary() const {
  return {{"game", to_string(session_.kind)},
          {"score", session_.score},
          {"hits", session_.hits},
          {"reverts", session_.reverts},
          {"elapsed_s", session_.elapsed},
          {"state", session_.state == GameState::over ? "over" : "running"},
          {"final_speed", bead_.speed}};
}

BeadBounceParams bead_bounce_params_from_json(const nlohmann::json& j) {
  BeadBounceParams p;
  p.initial_speed = j.value("initial_speed", p.initial_speed);
  p.kappa = j.value("kappa", p.kappa);
  p.racket_radius = j.value("racket_radius", p.racket_radius);
  if (j.contains("start_offset")) p.start_offset = vec_from(j.at("start_offset"));
  if (j.contains("start_direction")) p.start_direction = vec_from(j.at("start_direction"));
  if (!(p.racket_radius > 0.0)) throw std::invalid_argument("racket radius must be positive");
  if (!(p.initial_speed >= 0.0)) throw std::invalid_argument("initial speed must be >= 0");
  return p;
}

LeviShooterParams levi_shooter_params_from_json(const nlohmann::json& j) {
  LeviShooterParams p;
  p.initial_speed = j.value("initial_speed", p.initial_speed);
  p.speed_increment = j.value("speed_increment", p.speed_increment);
  p.cooldown = j.value("cooldown", p.cooldown);
  p.miss_limit = j.value("miss_limit", p.miss_limit);
  p.bead_radius = j.value("bead_radius", p.bead_radius);
  p.aim_margin = j.value("aim_margin", p.aim_margin);
  p.full_reset = j.value("full_reset", p.full_reset);
  if (j.contains("start_offset")) p.start_offset = vec_from(j.at("start_offset"));
  if (j.contains("start_direction")) p.start_direction = vec_from(j.at("start_direction"));
  if (p.miss_limit < 1) throw std::invalid_argument("miss_limit must be >= 1");
  if (!(p.cooldown >= 0.0)) throw std::invalid_argument("cooldown must be >= 0");
  return p;
}

}  // namespace levisim::games
