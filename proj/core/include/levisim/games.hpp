#pragma once

#include "levisim/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>
#include <vector>

namespace levisim::games {

/// Kinematic bead: straight lines plus specular wall reflections.
struct BallisticBead {
  Vec3 position = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
  double speed = 0.0;

  Vec3 velocity() const { return speed * direction; }
  /// Throws std::invalid_argument for a non-unit direction or negative speed.
  void validate() const;
};

struct RacketPose {
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();
  double radius = 0.015;
  Vec3 velocity = Vec3::Zero();
};

struct GunPose {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
  bool trigger = false;
};

enum class GameKind { bead_bounce, levi_shooter };
enum class GameState { running, over };

const char* to_string(GameKind kind);
GameKind game_kind_from_string(std::string_view s);

struct GameSession {
  GameKind kind = GameKind::bead_bounce;
  int score = 0;
  int miss_streak = 0;
  double cooldown = 0.0;
  double elapsed = 0.0;
  GameState state = GameState::running;
  int hits = 0;
  int reverts = 0;
  bool trigger_down = false;
};

struct BeadBounceParams {
  double initial_speed = 0.09;
  double kappa = 0.3;
  double racket_radius = 0.015;
  /// Start offset from the volume center and initial heading.
  Vec3 start_offset = Vec3(-0.035, 0.0, 0.0);
  Vec3 start_direction = Vec3(-0.8, 0.45, 0.4);
};

struct LeviShooterParams {
  double initial_speed = 0.05;
  double speed_increment = 0.001;
  double cooldown = 2.0;
  int miss_limit = 10;
  double bead_radius = 0.001;
  double aim_margin = 0.004;
  /// Revert all increments instead of one after miss_limit misses.
  bool full_reset = false;
  Vec3 start_offset = Vec3::Zero();
  Vec3 start_direction = Vec3(1.0, 0.4, 0.3);
};

using Events = std::vector<std::string>;

/// Moves the bead for dt, folding it back into `volume` at every wall and
/// emitting one "bounce" per wall contact.
Events advance_with_walls(BallisticBead& bead, double dt, const Box& volume);

struct BounceStep {
  BallisticBead bead;
  Events events;
  bool racket_hit = false;
  bool danger = false;
};

/// One BeadBounce tick. The racket head is a solid disc; a hit is a crossing
/// of the disc plane within the radius during the tick (relative motion).
BounceStep bead_bounce_step(const BallisticBead& bead, const RacketPose& racket, double dt,
                            const Box& volume, const BeadBounceParams& params = {});

struct ShooterStep {
  BallisticBead bead;
  GameSession session;
  Events events;
};

/// True iff the gun ray meets the sphere of radius bead_radius + aim_margin
/// around the bead (closed boundary).
bool aim_feedback(const BallisticBead& bead, const GunPose& gun,
                  const LeviShooterParams& params = {});
bool ray_hits_sphere(const Vec3& origin, const Vec3& direction, const Vec3& center, double radius);

double shooter_speed(const GameSession& session, const LeviShooterParams& params);

/// One LeviShooter tick: move the bead, count down the cooldown, then fire on
/// the trigger's rising edge.
ShooterStep levi_shooter_step(const BallisticBead& bead, const GunPose& gun, double dt,
                              const GameSession& session, const Box& volume,
                              const LeviShooterParams& params = {});

class BeadBounceGame {
 public:
  BeadBounceGame(Box volume, BeadBounceParams params = {});

  Events tick(const RacketPose& racket, double dt);
  const BallisticBead& bead() const { return bead_; }
  const GameSession& session() const { return session_; }
  const Box& volume() const { return volume_; }
  nlohmann::json summary() const;

 private:
  Box volume_;
  BeadBounceParams params_;
  BallisticBead bead_;
  GameSession session_;
};

class LeviShooterGame {
 public:
  LeviShooterGame(Box volume, LeviShooterParams params = {});

  Events tick(const GunPose& gun, double dt);
  const BallisticBead& bead() const { return bead_; }
  const GameSession& session() const { return session_; }
  const Box& volume() const { return volume_; }
  nlohmann::json summary() const;

 private:
  Box volume_;
  LeviShooterParams params_;
  BallisticBead bead_;
  GameSession session_;
};

BeadBounceParams bead_bounce_params_from_json(const nlohmann::json& j);
LeviShooterParams levi_shooter_params_from_json(const nlohmann::json& j);

}  // namespace levisim::games
