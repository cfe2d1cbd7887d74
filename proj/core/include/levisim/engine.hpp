#pragma once

#include "levisim/common.hpp"
#include "levisim/experiments.hpp"
#include "levisim/gain.hpp"
#include "levisim/games.hpp"
#include "levisim/particle_dynamics.hpp"
#include "levisim/protocol.hpp"
#include "levisim/session_log.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace levisim::server {

enum class Mode { steer, fitts, beadbounce, levishooter };

const char* to_string(Mode mode);
Mode mode_from_string(std::string_view s);

struct EngineConfig {
  double tick_rate = 90.0;
  dynamics::TrapModel model;
  dynamics::IntegratorConfig integrator;
  GainConfig gain;
  Box volume = default_levitation_volume();
  Vec3 initial_trap = Vec3::Zero();
  /// Defaults to the initial trap.
  std::optional<Vec3> initial_particle;
  Mode mode = Mode::steer;
  experiments::PointingTask task = experiments::default_conditions().front();
  games::BeadBounceParams bead_bounce;
  games::LeviShooterParams levi_shooter;

  void validate() const;
  double tick_seconds() const { return 1.0 / tick_rate; }
};

struct TickInputs {
  std::optional<protocol::TrapCommand> trap;
  std::optional<protocol::RacketCommand> racket;
  std::optional<protocol::GunCommand> gun;
};

struct TickResult {
  protocol::ParticleUpdate update;
  session::FrameRecord frame;
};

/// Deterministic fixed-tick simulation. Each tick applies the newest inputs,
/// runs the game or experiment hook, advances the particle by exactly one
/// tick while the trap moves linearly from its previous to its new position,
/// and produces one ParticleUpdate and one FrameRecord.
class SimEngine {
 public:
  explicit SimEngine(EngineConfig config);

  TickResult tick(const TickInputs& inputs = {});

  std::uint64_t ticks() const { return ticks_; }
  /// Timestamp (us) of the frame produced by tick number k (0-based).
  std::uint64_t frame_time_us(std::uint64_t k) const;
  const dynamics::ParticleState& particle() const { return state_; }
  const Vec3& trap() const { return trap_; }
  const EngineConfig& config() const { return config_; }
  std::optional<std::uint32_t> last_applied_trap_seq() const { return last_trap_seq_; }
  const dynamics::StepStats& solver_stats() const { return stepper_.stats(); }

  const games::BeadBounceGame* bead_bounce() const { return bead_bounce_.get(); }
  const games::LeviShooterGame* levi_shooter() const { return levi_shooter_.get(); }
  /// Game or experiment summary; empty object in steer mode.
  nlohmann::json summary() const;

 private:
  void advance(const Vec3& trap_begin, const Vec3& trap_end, std::vector<std::string>& events);

  EngineConfig config_;
  dynamics::Stepper stepper_;
  dynamics::ParticleState state_;
  Vec3 trap_;
  Vec3 input_;
  std::uint64_t ticks_ = 0;
  std::optional<std::uint32_t> last_trap_seq_;
  bool failed_ = false;
  bool escape_reported_ = false;

  std::unique_ptr<experiments::HitDetector> hits_;
  std::unique_ptr<games::BeadBounceGame> bead_bounce_;
  std::unique_ptr<games::LeviShooterGame> levi_shooter_;
  games::RacketPose racket_;
  std::optional<Vec3> last_racket_center_;
  games::GunPose gun_;
};

/// Scripted trap inputs: CSV with header "t_us,x,y,z". Sequence numbers are
/// assigned in file order starting at 1.
std::vector<protocol::TrapCommand> read_command_script(std::istream& in);
std::vector<protocol::TrapCommand> read_command_script_file(const std::string& path);
void write_command_script(std::ostream& out, std::span<const protocol::TrapCommand> commands);

struct ScriptRunStats {
  std::uint64_t ticks = 0;
  std::uint64_t applied = 0;
  std::uint64_t dropped = 0;
  std::size_t max_depth = 0;
};

/// Runs `ticks` ticks headless and unpaced. Every command with t_us at or
/// before a tick's start time is delivered as an encoded datagram through a
/// CommandIngress before that tick, so several commands per tick collapse to
/// the newest one.
ScriptRunStats run_script(SimEngine& engine, std::span<const protocol::TrapCommand> script,
                          std::uint64_t ticks,
                          const std::function<void(const TickResult&)>& sink);

EngineConfig engine_config_from_json(const nlohmann::json& doc);

}  // namespace levisim::server
