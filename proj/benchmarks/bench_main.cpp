#include "levisim/engine.hpp"
#include "levisim/ingress.hpp"
#include "levisim/experiments.hpp"
#include "levisim/particle_dynamics.hpp"
#include "levisim/protocol.hpp"
#include "levisim/trap.hpp"

#include <benchmark/benchmark.h>

#include <sstream>

using namespace levisim;

namespace {

const acoustics::TrapSetup& trap() {
  static const acoustics::TrapSetup s = acoustics::build_trap(acoustics::FieldConfig{});
  return s;
}

void BM_Pressure(benchmark::State& state) {
  const auto& s = trap();
  const Vec3 p = s.center + Vec3(1e-3, 5e-4, -1e-3);
  for (auto _ : state) benchmark::DoNotOptimize(s.field.pressure(p));
}
BENCHMARK(BM_Pressure);

void BM_GorkovForce(benchmark::State& state) {
  const auto& s = trap();
  const Vec3 p = s.center + Vec3(1e-3, 5e-4, -1e-3);
  for (auto _ : state) benchmark::DoNotOptimize(s.field.force(p));
}
BENCHMARK(BM_GorkovForce);

void BM_LinearTick(benchmark::State& state) {
  dynamics::Stepper stepper(dynamics::TrapModel{}, {});
  dynamics::ParticleState p;
  p.position = Vec3(0.003, 0.001, -0.002);
  int k = 0;
  for (auto _ : state) {
    const Vec3 trap_pos(0.01 * std::sin(0.1 * k), 0, 0);
    p = stepper.advance(p, trap_pos, trap_pos, 1.0 / 90.0);
    ++k;
  }
}
BENCHMARK(BM_LinearTick);

void BM_FullFieldTick(benchmark::State& state) {
  dynamics::TrapModel model;
  model.source = dynamics::ForceSource::full_field;
  model.field_trap.field = std::make_shared<acoustics::AcousticField>(trap().field);
  model.field_trap.center = trap().center;
  dynamics::Stepper stepper(model, {});
  dynamics::ParticleState p;
  p.position = Vec3(0.001, 0.0005, 0);
  for (auto _ : state) p = stepper.advance(p, Vec3::Zero(), 1.0 / 90.0);
}
BENCHMARK(BM_FullFieldTick)->Unit(benchmark::kMillisecond);

void BM_EngineTick(benchmark::State& state) {
  server::SimEngine engine(server::EngineConfig{});
  std::uint32_t seq = 0;
  for (auto _ : state) {
    server::TickInputs in;
    in.trap = protocol::TrapCommand{++seq, 0, Vec3(0.01 * std::sin(0.05 * seq), 0, 0)};
    benchmark::DoNotOptimize(engine.tick(in));
  }
}
BENCHMARK(BM_EngineTick);

void BM_EncodeDecode(benchmark::State& state) {
  protocol::ParticleUpdate u{42, 123456, Vec3(0.01, 0.02, 0.03), Vec3(0.1, 0.2, 0.3), 1};
  for (auto _ : state) {
    const auto bytes = protocol::encode(u);
    benchmark::DoNotOptimize(protocol::decode_particle_update(bytes));
  }
}
BENCHMARK(BM_EncodeDecode);

void BM_MailboxOfferTake(benchmark::State& state) {
  server::Mailbox<protocol::TrapCommand> box;
  std::uint32_t seq = 0;
  for (auto _ : state) {
    box.offer({++seq, 0, Vec3::Zero()});
    benchmark::DoNotOptimize(box.take());
  }
}
BENCHMARK(BM_MailboxOfferTake);

void BM_WriteLog(benchmark::State& state) {
  std::vector<session::FrameRecord> frames(2700);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    frames[i].frame_us = i * 11111;
    frames[i].particle = Vec3(1e-3 * std::sin(0.01 * i), 2e-4, -3e-3);
  }
  for (auto _ : state) {
    std::ostringstream out;
    session::write_log(out, frames);
    benchmark::DoNotOptimize(out.str());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(frames.size()));
}
BENCHMARK(BM_WriteLog)->Unit(benchmark::kMillisecond);

void BM_DetectHits(benchmark::State& state) {
  const auto task = experiments::default_conditions()[0];
  std::vector<session::FrameRecord> frames(9000);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    frames[i].frame_us = i * 11111;
    frames[i].particle = (i / 90) % 2 == 0 ? task.target_a : task.target_b;
  }
  for (auto _ : state) benchmark::DoNotOptimize(experiments::detect_hits(frames, task));
}
BENCHMARK(BM_DetectHits);

}  // namespace

BENCHMARK_MAIN();
