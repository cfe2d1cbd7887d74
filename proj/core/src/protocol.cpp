#include "levisim/protocol.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>

namespace levisim::protocol {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

class Writer {
 public:
  explicit Writer(std::span<std::byte> out) : out_(out) {}

  template <typename T>
  void put(T value) {
    std::array<std::byte, sizeof(T)> raw;
    std::memcpy(raw.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    std::memcpy(out_.data() + pos_, raw.data(), sizeof(T));
    pos_ += sizeof(T);
  }
  void put(const Vec3& v) {
    for (int i = 0; i < 3; ++i) put<double>(v[i]);
  }

 private:
  std::span<std::byte> out_;
  std::size_t pos_ = 0;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  template <typename T>
  T get() {
    std::array<std::byte, sizeof(T)> raw;
    std::memcpy(raw.data(), in_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw.data(), sizeof(T));
    return value;
  }
  Vec3 vec() {
    Vec3 v;
    for (int i = 0; i < 3; ++i) v[i] = get<double>();
    return v;
  }

 private:
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

template <typename T>
Decoded<T> fail(DecodeError e) {
  return Decoded<T>{std::nullopt, e};
}

std::optional<DecodeError> check_header(Reader& r, MessageType expected) {
  if (r.get<std::uint16_t>() != kMagic) return DecodeError::bad_magic;
  if (r.get<std::uint8_t>() != kVersion) return DecodeError::bad_version;
  if (r.get<std::uint8_t>() != static_cast<std::uint8_t>(expected)) return DecodeError::bad_type;
  return std::nullopt;
}

std::optional<Vec3> vec_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) return std::nullopt;
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) return std::nullopt;
    v[i] = j[i].get<double>();
  }
  if (!v.allFinite()) return std::nullopt;
  return v;
}

}  // namespace

const char* to_string(DecodeError error) {
  switch (error) {
    case DecodeError::bad_length: return "bad_length";
    case DecodeError::bad_magic: return "bad_magic";
    case DecodeError::bad_version: return "bad_version";
    case DecodeError::bad_type: return "bad_type";
    case DecodeError::non_finite: return "non_finite";
  }
  return "unknown";
}

TrapCommandBytes encode(const TrapCommand& c) {
  TrapCommandBytes out{};
  Writer w(out);
  w.put<std::uint16_t>(kMagic);
  w.put<std::uint8_t>(kVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(MessageType::trap_command));
  w.put<std::uint32_t>(c.sequence);
  w.put<std::uint64_t>(c.timestamp_us);
  w.put(c.position);
  return out;
}

ParticleUpdateBytes encode(const ParticleUpdate& u) {
  ParticleUpdateBytes out{};
  Writer w(out);
  w.put<std::uint16_t>(kMagic);
  w.put<std::uint8_t>(kVersion);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(MessageType::particle_update));
  w.put<std::uint32_t>(u.sequence);
  w.put<std::uint64_t>(u.timestamp_us);
  w.put(u.position);
  w.put(u.velocity);
  w.put<std::uint32_t>(u.flags);
  return out;
}

Decoded<TrapCommand> decode_trap_command(std::span<const std::byte> datagram) {
  if (datagram.size() != kTrapCommandSize) return fail<TrapCommand>(DecodeError::bad_length);
  Reader r(datagram);
  if (auto e = check_header(r, MessageType::trap_command)) return fail<TrapCommand>(*e);
  TrapCommand c;
  c.sequence = r.get<std::uint32_t>();
  c.timestamp_us = r.get<std::uint64_t>();
  c.position = r.vec();
  if (!c.position.allFinite()) return fail<TrapCommand>(DecodeError::non_finite);
  return Decoded<TrapCommand>{c, std::nullopt};
}

Decoded<ParticleUpdate> decode_particle_update(std::span<const std::byte> datagram) {
  if (datagram.size() != kParticleUpdateSize) return fail<ParticleUpdate>(DecodeError::bad_length);
  Reader r(datagram);
  if (auto e = check_header(r, MessageType::particle_update)) return fail<ParticleUpdate>(*e);
  ParticleUpdate u;
  u.sequence = r.get<std::uint32_t>();
  u.timestamp_us = r.get<std::uint64_t>();
  u.position = r.vec();
  u.velocity = r.vec();
  u.flags = r.get<std::uint32_t>();
  if (!u.position.allFinite() || !u.velocity.allFinite()) {
    return fail<ParticleUpdate>(DecodeError::non_finite);
  }
  return Decoded<ParticleUpdate>{u, std::nullopt};
}

nlohmann::json to_json(const TrapCommand& c) {
  return {{"type", "trap"},
          {"seq", c.sequence},
          {"t_us", c.timestamp_us},
          {"pos", {c.position.x(), c.position.y(), c.position.z()}}};
}

nlohmann::json to_json(const ParticleUpdate& u) {
  return {{"type", "particle"},
          {"seq", u.sequence},
          {"t_us", u.timestamp_us},
          {"pos", {u.position.x(), u.position.y(), u.position.z()}},
          {"vel", {u.velocity.x(), u.velocity.y(), u.velocity.z()}},
          {"flags", u.flags}};
}

std::optional<TrapCommand> trap_command_from_json(const nlohmann::json& m) {
  if (!m.is_object() || m.value("type", "") != "trap") return std::nullopt;
  const auto seq = m.find("seq");
  const auto t = m.find("t_us");
  const auto pos = m.find("pos");
  if (seq == m.end() || !seq->is_number_unsigned() || pos == m.end()) return std::nullopt;
  if (seq->get<std::uint64_t>() > 0xFFFFFFFFull) return std::nullopt;
  auto p = vec_from(*pos);
  if (!p) return std::nullopt;
  TrapCommand c;
  c.sequence = static_cast<std::uint32_t>(seq->get<std::uint64_t>());
  c.timestamp_us = (t != m.end() && t->is_number_unsigned()) ? t->get<std::uint64_t>() : 0;
  c.position = *p;
  return c;
}

std::optional<ParticleUpdate> particle_update_from_json(const nlohmann::json& m) {
  if (!m.is_object() || m.value("type", "") != "particle") return std::nullopt;
  auto p = m.contains("pos") ? vec_from(m["pos"]) : std::nullopt;
  auto v = m.contains("vel") ? vec_from(m["vel"]) : std::nullopt;
  const auto seq = m.find("seq");
  const auto t = m.find("t_us");
  const auto fl = m.find("flags");
  if (!p || !v || seq == m.end() || !seq->is_number_unsigned()) return std::nullopt;
  if (seq->get<std::uint64_t>() > 0xFFFFFFFFull) return std::nullopt;
  if (fl != m.end() && !fl->is_number_unsigned()) return std::nullopt;
  ParticleUpdate u;
  u.sequence = static_cast<std::uint32_t>(seq->get<std::uint64_t>());
  u.timestamp_us = (t != m.end() && t->is_number_unsigned()) ? t->get<std::uint64_t>() : 0;
  u.position = *p;
  u.velocity = *v;
  u.flags = fl != m.end() ? static_cast<std::uint32_t>(fl->get<std::uint64_t>()) : 0;
  return u;
}

namespace {

std::optional<std::pair<std::uint32_t, std::uint64_t>> header_from(const nlohmann::json& m,
                                                                  const char* type) {
  if (!m.is_object() || m.value("type", "") != type) return std::nullopt;
  const auto seq = m.find("seq");
  if (seq == m.end() || !seq->is_number_unsigned()) return std::nullopt;
  if (seq->get<std::uint64_t>() > 0xFFFFFFFFull) return std::nullopt;
  const auto t = m.find("t_us");
  const std::uint64_t t_us = (t != m.end() && t->is_number_unsigned()) ? t->get<std::uint64_t>() : 0;
  return std::make_pair(static_cast<std::uint32_t>(seq->get<std::uint64_t>()), t_us);
}

}  // namespace

std::optional<RacketCommand> racket_command_from_json(const nlohmann::json& m) {
  auto h = header_from(m, "racket");
  if (!h) return std::nullopt;
  auto c = m.contains("center") ? vec_from(m["center"]) : std::nullopt;
  auto n = m.contains("normal") ? vec_from(m["normal"]) : std::nullopt;
  if (!c || !n) return std::nullopt;
  return RacketCommand{h->first, h->second, *c, *n};
}

std::optional<GunCommand> gun_command_from_json(const nlohmann::json& m) {
  auto h = header_from(m, "gun");
  if (!h) return std::nullopt;
  auto o = m.contains("origin") ? vec_from(m["origin"]) : std::nullopt;
  auto d = m.contains("dir") ? vec_from(m["dir"]) : std::nullopt;
  if (!o || !d) return std::nullopt;
  const auto trig = m.find("trigger");
  if (trig != m.end() && !trig->is_boolean()) return std::nullopt;
  return GunCommand{h->first, h->second, *o, *d, trig != m.end() && trig->get<bool>()};
}

nlohmann::json to_json(const RacketCommand& c) {
  return {{"type", "racket"},
          {"seq", c.sequence},
          {"t_us", c.timestamp_us},
          {"center", {c.center.x(), c.center.y(), c.center.z()}},
          {"normal", {c.normal.x(), c.normal.y(), c.normal.z()}}};
}

nlohmann::json to_json(const GunCommand& c) {
  return {{"type", "gun"},
          {"seq", c.sequence},
          {"t_us", c.timestamp_us},
          {"origin", {c.origin.x(), c.origin.y(), c.origin.z()}},
          {"dir", {c.direction.x(), c.direction.y(), c.direction.z()}},
          {"trigger", c.trigger}};
}

}  // namespace levisim::protocol
