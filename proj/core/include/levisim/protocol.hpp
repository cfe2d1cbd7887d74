#pragma once

#include "levisim/common.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>

namespace levisim::protocol {

// Little-endian datagram header: magic u16, version u8, type u8, seq u32, t_us u64.
inline constexpr std::uint16_t kMagic = 0x4C56;
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::size_t kHeaderSize = 16;
inline constexpr std::size_t kTrapCommandSize = 40;
inline constexpr std::size_t kParticleUpdateSize = 68;

enum class MessageType : std::uint8_t { trap_command = 1, particle_update = 2 };

namespace flags {
inline constexpr std::uint32_t escaped = 1u << 0;
inline constexpr std::uint32_t target_hit = 1u << 1;
}  // namespace flags

struct TrapCommand {
  std::uint32_t sequence = 0;
  std::uint64_t timestamp_us = 0;
  Vec3 position = Vec3::Zero();

  bool operator==(const TrapCommand&) const = default;
};

struct ParticleUpdate {
  std::uint32_t sequence = 0;
  std::uint64_t timestamp_us = 0;
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  std::uint32_t flags = 0;

  bool operator==(const ParticleUpdate&) const = default;
};

enum class DecodeError { bad_length, bad_magic, bad_version, bad_type, non_finite };

const char* to_string(DecodeError error);

using TrapCommandBytes = std::array<std::byte, kTrapCommandSize>;
using ParticleUpdateBytes = std::array<std::byte, kParticleUpdateSize>;

TrapCommandBytes encode(const TrapCommand& command);
ParticleUpdateBytes encode(const ParticleUpdate& update);

/// Result of decoding: exactly one of value / error is set.
template <typename T>
struct Decoded {
  std::optional<T> value;
  std::optional<DecodeError> error;

  explicit operator bool() const { return value.has_value(); }
};

Decoded<TrapCommand> decode_trap_command(std::span<const std::byte> datagram);
Decoded<ParticleUpdate> decode_particle_update(std::span<const std::byte> datagram);

// JSON mirrors used by the WebSocket bridge.
nlohmann::json to_json(const TrapCommand& command);
nlohmann::json to_json(const ParticleUpdate& update);
/// Parses {"type":"trap","seq":N,"t_us":T,"pos":[x,y,z]}; nullopt when malformed.
std::optional<TrapCommand> trap_command_from_json(const nlohmann::json& message);
std::optional<ParticleUpdate> particle_update_from_json(const nlohmann::json& message);

// Game poses travel only as JSON over the WebSocket bridge.
struct RacketCommand {
  std::uint32_t sequence = 0;
  std::uint64_t timestamp_us = 0;
  Vec3 center = Vec3::Zero();
  Vec3 normal = Vec3::UnitX();
};

struct GunCommand {
  std::uint32_t sequence = 0;
  std::uint64_t timestamp_us = 0;
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitX();
  bool trigger = false;
};

/// {"type":"racket","seq":N,"t_us":T,"center":[..],"normal":[..]}
std::optional<RacketCommand> racket_command_from_json(const nlohmann::json& message);
/// {"type":"gun","seq":N,"t_us":T,"origin":[..],"dir":[..],"trigger":bool}
std::optional<GunCommand> gun_command_from_json(const nlohmann::json& message);
nlohmann::json to_json(const RacketCommand& command);
nlohmann::json to_json(const GunCommand& command);

}  // namespace levisim::protocol
