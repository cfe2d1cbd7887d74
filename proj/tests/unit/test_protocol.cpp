#include "levisim/protocol.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

using namespace levisim;
using namespace levisim::protocol;
using nlohmann::json;

namespace {

// Independent little-endian writer used as the layout oracle.
struct Writer {
  std::vector<std::byte> bytes;
  void u8(std::uint8_t v) { bytes.push_back(std::byte{v}); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    u64(v);
  }
};

std::vector<std::byte> trap_bytes(std::uint32_t seq, std::uint64_t t, const Vec3& p) {
  Writer w;
  w.u16(0x4C56);
  w.u8(1);
  w.u8(1);
  w.u32(seq);
  w.u64(t);
  for (int i = 0; i < 3; ++i) w.f64(p[i]);
  return w.bytes;
}

}  // namespace

TEST(Wire, SizesMatchLayout) {
  EXPECT_EQ(kTrapCommandSize, 40u);
  EXPECT_EQ(kParticleUpdateSize, 68u);
  EXPECT_EQ(kHeaderSize, 16u);
}

TEST(Wire, TrapCommandBytesMatchOracle) {
  const TrapCommand c{7, 123456789012ull, Vec3(0.01, -0.02, 0.003)};
  const auto bytes = encode(c);
  const auto expected = trap_bytes(7, 123456789012ull, c.position);
  ASSERT_EQ(expected.size(), bytes.size());
  EXPECT_EQ(std::memcmp(bytes.data(), expected.data(), bytes.size()), 0);
  EXPECT_EQ(bytes[0], std::byte{0x56});
  EXPECT_EQ(bytes[1], std::byte{0x4C});
}

TEST(Wire, ParticleUpdateBytesMatchOracle) {
  const ParticleUpdate u{42, 11111, Vec3(1, 2, 3), Vec3(-0.5, 0.25, 0), flags::escaped | flags::target_hit};
  Writer w;
  w.u16(0x4C56);
  w.u8(1);
  w.u8(2);
  w.u32(42);
  w.u64(11111);
  for (double d : {1.0, 2.0, 3.0, -0.5, 0.25, 0.0}) w.f64(d);
  w.u32(3);
  const auto bytes = encode(u);
  ASSERT_EQ(w.bytes.size(), bytes.size());
  EXPECT_EQ(std::memcmp(bytes.data(), w.bytes.data(), bytes.size()), 0);
}

TEST(Wire, RoundTrip) {
  const TrapCommand c{0xFFFFFFFFu, 0xFFFFFFFFFFFFFFFFull, Vec3(-0.07, 0.053, 1e-300)};
  const auto dc = decode_trap_command(encode(c));
  ASSERT_TRUE(dc);
  EXPECT_EQ(*dc.value, c);
  const ParticleUpdate u{1, 2, Vec3(0.1, 0.2, 0.3), Vec3(4, 5, 6), flags::target_hit};
  const auto du = decode_particle_update(encode(u));
  ASSERT_TRUE(du);
  EXPECT_EQ(*du.value, u);
}

TEST(Wire, DecodeErrors) {
  auto bytes = trap_bytes(1, 0, Vec3::Zero());
  auto truncated = bytes;
  truncated.pop_back();
  EXPECT_EQ(decode_trap_command(truncated).error, DecodeError::bad_length);
  EXPECT_FALSE(decode_trap_command(truncated).value);
  EXPECT_EQ(decode_trap_command(std::span<const std::byte>{}).error, DecodeError::bad_length);

  auto magic = bytes;
  magic[0] = std::byte{0};
  EXPECT_EQ(decode_trap_command(magic).error, DecodeError::bad_magic);

  auto version = bytes;
  version[2] = std::byte{2};
  EXPECT_EQ(decode_trap_command(version).error, DecodeError::bad_version);

  auto type = bytes;
  type[3] = std::byte{2};
  EXPECT_EQ(decode_trap_command(type).error, DecodeError::bad_type);

  const auto nan = trap_bytes(1, 0, Vec3(std::nan(""), 0, 0));
  EXPECT_EQ(decode_trap_command(nan).error, DecodeError::non_finite);
  const auto inf = trap_bytes(1, 0, Vec3(0, std::numeric_limits<double>::infinity(), 0));
  EXPECT_EQ(decode_trap_command(inf).error, DecodeError::non_finite);

  EXPECT_EQ(decode_particle_update(bytes).error, DecodeError::bad_length);
  EXPECT_STRNE(to_string(DecodeError::bad_magic), "");
}

TEST(Json, TrapCommandMirror) {
  const TrapCommand c{9, 500, Vec3(0.01, 0.0, -0.02)};
  const json j = to_json(c);
  EXPECT_EQ(j["type"], "trap");
  EXPECT_EQ(j["seq"], 9);
  EXPECT_EQ(j["t_us"], 500);
  EXPECT_EQ(j["pos"], json::array({0.01, 0.0, -0.02}));
  const auto back = trap_command_from_json(json::parse(j.dump()));
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, c);
}

TEST(Json, TrapCommandRejectsMalformed) {
  EXPECT_FALSE(trap_command_from_json(json::parse(R"({"type":"trap","seq":1})")));
  EXPECT_FALSE(trap_command_from_json(json::parse(R"({"type":"trap","seq":-1,"pos":[0,0,0]})")));
  EXPECT_FALSE(trap_command_from_json(json::parse(R"({"type":"trap","seq":1,"pos":[0,0]})")));
  EXPECT_FALSE(trap_command_from_json(json::parse(R"({"type":"trap","seq":1,"pos":[0,"a",0]})")));
  EXPECT_FALSE(trap_command_from_json(json::parse(R"({"type":"trap","seq":4294967296,"pos":[0,0,0]})")));
  EXPECT_FALSE(trap_command_from_json(json::parse(R"({"type":"gun","seq":1,"pos":[0,0,0]})")));
  EXPECT_FALSE(trap_command_from_json(json::parse(R"([1,2,3])")));
  const auto ok = trap_command_from_json(json::parse(R"({"type":"trap","seq":3,"pos":[0,0.01,0]})"));
  ASSERT_TRUE(ok);
  EXPECT_EQ(ok->timestamp_us, 0u);
}

TEST(Json, ParticleUpdateMirror) {
  const ParticleUpdate u{5, 55555, Vec3(0.001, 0.002, 0.003), Vec3(0.1, 0, -0.1), flags::escaped};
  const json j = to_json(u);
  EXPECT_EQ(j["type"], "particle");
  EXPECT_EQ(j["flags"], 1);
  EXPECT_EQ(j["vel"], json::array({0.1, 0.0, -0.1}));
  const auto back = particle_update_from_json(json::parse(j.dump()));
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, u);
  EXPECT_FALSE(particle_update_from_json(json::parse(R"({"type":"particle","seq":"x","pos":[0,0,0],"vel":[0,0,0]})")));
  EXPECT_FALSE(particle_update_from_json(json::parse(R"({"type":"particle","seq":1,"pos":[0,0,0],"vel":[0,0,0],"flags":"a"})")));
}

TEST(Json, GamePoses) {
  const auto r = racket_command_from_json(
      json::parse(R"({"type":"racket","seq":2,"t_us":10,"center":[0.01,0,0],"normal":[1,0,0]})"));
  ASSERT_TRUE(r);
  EXPECT_EQ(r->sequence, 2u);
  EXPECT_EQ(r->center, Vec3(0.01, 0, 0));
  EXPECT_EQ(to_json(*r)["type"], "racket");
  EXPECT_FALSE(racket_command_from_json(json::parse(R"({"type":"racket","seq":2,"center":[0,0,0]})")));

  const auto g = gun_command_from_json(json::parse(
      R"({"type":"gun","seq":4,"t_us":20,"origin":[0,0,-0.2],"dir":[0,0,1],"trigger":true})"));
  ASSERT_TRUE(g);
  EXPECT_TRUE(g->trigger);
  EXPECT_EQ(g->direction, Vec3(0, 0, 1));
  const json back = to_json(*g);
  EXPECT_EQ(back["trigger"], true);
  EXPECT_EQ(back["dir"], json::array({0.0, 0.0, 1.0}));
  EXPECT_FALSE(gun_command_from_json(
      json::parse(R"({"type":"gun","seq":4,"origin":[0,0,0],"dir":[0,0,1],"trigger":1})")));
}
