#include "levisim/engine.hpp"
#include "levisim/experiments.hpp"
#include "levisim/particle_dynamics.hpp"
#include "levisim/server.hpp"
#include "levisim/session_log.hpp"
#include "levisim/trap.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

using namespace levisim;
namespace fs = std::filesystem;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::json::parse(in);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

nlohmann::json vec_json(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

struct ServeOptions {
  std::string config;
  std::string record;
  std::string replay;
  double speed = 1.0;
  bool headless = false;
  std::string script;
  double duration = -1.0;
  bool unpaced = false;
  int udp_port = -1;
  int ws_port = -1;
  std::string static_dir;
  std::string summary;
  double spin_ms = -1.0;
};

server::ServerConfig make_server_config(const ServeOptions& o) {
  server::ServerConfig c = o.config.empty() ? server::ServerConfig{} : server::load_server_config(o.config);
  if (!o.record.empty()) c.record_path = o.record;
  if (o.duration >= 0.0) c.duration = o.duration;
  if (o.unpaced) c.paced = false;
  if (o.udp_port >= 0) c.udp_port = static_cast<std::uint16_t>(o.udp_port);
  if (o.ws_port >= 0) c.ws_port = static_cast<std::uint16_t>(o.ws_port);
  if (!o.static_dir.empty()) c.static_dir = o.static_dir;
  if (!o.summary.empty()) c.summary_path = o.summary;
  if (o.spin_ms >= 0.0) c.spin_margin_ms = o.spin_ms;
  if (o.headless) c.enable_websocket = false;
  return c;
}

// Offline run of a command script through the engine.
int run_scripted(const ServeOptions& o, const server::ServerConfig& cfg) {
  std::ifstream in(o.script);
  if (!in) throw std::runtime_error("cannot open " + o.script);
  const auto script = server::read_command_script(in);
  server::SimEngine engine(cfg.engine);
  std::uint64_t ticks = 0;
  if (cfg.duration > 0.0) {
    ticks = static_cast<std::uint64_t>(std::llround(cfg.duration * cfg.engine.tick_rate));
  } else if (!script.empty()) {
    ticks = static_cast<std::uint64_t>(
                std::ceil(static_cast<double>(script.back().timestamp_us) * 1e-6 * cfg.engine.tick_rate)) +
            1;
  }
  std::unique_ptr<session::SessionRecorder> recorder;
  if (!cfg.record_path.empty()) recorder = std::make_unique<session::SessionRecorder>(cfg.record_path);
  const auto stats = server::run_script(engine, script, ticks, [&](const server::TickResult& r) {
    if (recorder) recorder->push(r.frame);
  });
  if (recorder) recorder->close();
  nlohmann::json s = engine.summary();
  s["ticks"] = stats.ticks;
  s["applied"] = stats.applied;
  s["dropped"] = stats.dropped;
  s["max_depth"] = stats.max_depth;
  if (!cfg.summary_path.empty()) open_out(cfg.summary_path) << s.dump(2) << '\n';
  std::cout << s.dump() << '\n';
  return 0;
}

int serve(const ServeOptions& o) {
  const auto cfg = make_server_config(o);
  if (!o.script.empty()) return run_scripted(o, cfg);

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  if (!o.replay.empty()) {
    const auto frames = session::read_log_file(o.replay);
    auto replay_cfg = cfg;
    replay_cfg.record_path.clear();
    server::RealtimeServer player(replay_cfg);
    player.start();
    std::cerr << "replaying " << frames.size() << " frames at " << o.speed << "x";
    if (player.ws_port()) std::cerr << ", ws port " << player.ws_port();
    std::cerr << '\n';
    const auto stats = player.replay(frames, o.speed);
    player.shutdown();
    std::cout << nlohmann::json{{"emitted", stats.emitted},
                                {"wall_s", std::chrono::duration<double>(stats.wall_time).count()}}
                     .dump()
              << '\n';
    return 0;
  }
  server::RealtimeServer srv(cfg);
  srv.start();
  std::cerr << "levisim: udp " << srv.udp_port();
  if (srv.ws_port()) std::cerr << ", ws/http " << srv.ws_port();
  std::cerr << (cfg.paced ? "" : ", unpaced") << '\n';
  const auto pacing = srv.run(g_stop);
  srv.shutdown();
  const auto trap = srv.trap_stats();
  std::cout << nlohmann::json{{"ticks", srv.engine().ticks()},
                              {"pacing", {{"p50_ms", pacing.p50_ms},
                                          {"p99_ms", pacing.p99_ms},
                                          {"max_ms", pacing.max_ms},
                                          {"catch_up_ticks", pacing.catch_up_ticks}}},
                              {"trap_commands", {{"received", trap.received},
                                                 {"applied", trap.applied},
                                                 {"superseded", trap.superseded},
                                                 {"stale", trap.stale},
                                                 {"malformed", trap.malformed},
                                                 {"max_depth", trap.max_depth}}}}
                   .dump()
            << '\n';
  return 0;
}

struct AnalyzeOptions {
  std::vector<std::string> logs;
  std::string conditions;
  std::string group_by = "id";
  std::string out;
  std::string model_out;
  bool use_events = false;
};

int analyze_fitts(const AnalyzeOptions& o) {
  if (o.conditions.empty()) throw std::runtime_error("--conditions is required to know each log's targets");
  const fs::path base = fs::path(o.conditions).parent_path();
  auto entries = experiments::conditions_from_json(read_json(o.conditions));
  // Positional logs select a subset (matched by file name); none means all.
  std::vector<experiments::ConditionEntry> selected;
  for (auto& e : entries) {
    if (e.log.empty()) throw std::runtime_error("condition " + e.task.name + " has no log");
    if (fs::path(e.log).is_relative()) e.log = (base / e.log).string();
    if (o.logs.empty()) {
      selected.push_back(e);
      continue;
    }
    for (const auto& l : o.logs) {
      if (fs::path(l).filename() == fs::path(e.log).filename()) {
        e.log = l;
        selected.push_back(e);
      }
    }
  }
  if (selected.empty()) throw std::runtime_error("no condition matches the given logs");

  std::vector<experiments::TrialSummary> trials;
  for (const auto& e : selected) {
    const auto frames = session::read_log_file(e.log);
    const auto hits = o.use_events ? experiments::hits_from_events(frames)
                                   : experiments::detect_hits(frames, e.task);
    trials.push_back(experiments::summarize_trial(hits.movement_times_s, e.task, e.participant));
  }
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!o.out.empty()) {
    file = open_out(o.out);
    out = &file;
  }
  const auto groups = experiments::group_by_id(trials);
  if (o.group_by == "id") {
    experiments::write_groups_csv(*out, groups);
  } else {
    experiments::write_trials_csv(*out, trials);
  }
  if (!o.model_out.empty()) {
    auto model_file = open_out(o.model_out);
    experiments::write_model_csv(model_file, experiments::fit_fitts(groups));
  }
  return 0;
}

struct FieldOptions {
  std::string config;
  std::string profile;
  double half_range = 0.02;
  double step = 2e-4;
};

int field_characterize(const FieldOptions& o) {
  const auto cfg = o.config.empty() ? acoustics::FieldConfig{} : acoustics::load_field_config(o.config);
  const auto setup = acoustics::build_trap(cfg);
  const auto fit = acoustics::linearize_trap_detailed(setup.field, setup.center);
  const auto& c = setup.characterization;
  nlohmann::json j{{"focus", vec_json(setup.focus)},
                   {"center", vec_json(c.center)},
                   {"diameters_m", vec_json(c.diameters)},
                   {"radius_plus_m", vec_json(c.radius_plus)},
                   {"radius_minus_m", vec_json(c.radius_minus)},
                   {"max_force_N", vec_json(c.max_force)},
                   {"stiffness_N_per_m", vec_json(fit.stiffness)},
                   {"ratio_y_x", fit.stiffness.y() / fit.stiffness.x()},
                   {"ratio_y_z", fit.stiffness.y() / fit.stiffness.z()},
                   {"small_particle", setup.field.small_particle()}};
  std::cout << j.dump(2) << '\n';
  if (!o.profile.empty()) {
    auto out = open_out(o.profile);
    acoustics::write_force_profile(out, setup.field, setup.center, o.half_range, o.step);
  }
  return 0;
}

struct SimulateOptions {
  std::string config;
  std::vector<double> step{0.005, 0.0, 0.0};
  double duration = 1.0;
  double rate = 1000.0;
  std::string out;
};

int simulate(const SimulateOptions& o) {
  const auto engine = o.config.empty() ? server::EngineConfig{} : server::engine_config_from_json(read_json(o.config));
  const Vec3 target(o.step[0], o.step[1], o.step[2]);
  const auto schedule = dynamics::TrapSchedule::constant(target, o.duration);
  const auto samples =
      dynamics::simulate_trajectory({}, schedule, engine.model, engine.integrator, o.duration, o.rate);
  std::ofstream file;
  std::ostream* out = &std::cout;
  if (!o.out.empty()) {
    file = open_out(o.out);
    out = &file;
  }
  dynamics::write_trajectory_csv(*out, samples, schedule);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"levisim: acoustic levitation interaction simulator"};
  app.require_subcommand(0, 1);

  ServeOptions serve_opts;
  app.add_option("--config", serve_opts.config, "Server/engine JSON config")->check(CLI::ExistingFile);
  app.add_option("--record", serve_opts.record, "Write the session CSV here");
  app.add_option("--replay", serve_opts.replay, "Re-emit a recorded session CSV")->check(CLI::ExistingFile);
  app.add_option("--speed", serve_opts.speed, "Replay speed factor")->check(CLI::PositiveNumber);
  app.add_flag("--headless", serve_opts.headless, "No WebSocket/HTTP endpoint");
  app.add_option("--script", serve_opts.script, "Drive the engine from a t_us,x,y,z command CSV (offline)")
      ->check(CLI::ExistingFile);
  app.add_option("--duration", serve_opts.duration, "Simulated seconds (0 = until interrupted)")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--unpaced", serve_opts.unpaced, "Tick as fast as possible");
  app.add_option("--udp-port", serve_opts.udp_port)->check(CLI::Range(0, 65535));
  app.add_option("--ws-port", serve_opts.ws_port)->check(CLI::Range(0, 65535));
  app.add_option("--static", serve_opts.static_dir, "Directory served under /static")->check(CLI::ExistingDirectory);
  app.add_option("--summary", serve_opts.summary, "Write the end-of-run JSON summary here");
  app.add_option("--spin-ms", serve_opts.spin_ms, "Busy-wait this long before each tick deadline")
      ->check(CLI::NonNegativeNumber);

  auto* analyze = app.add_subcommand("analyze", "Offline analysis");
  analyze->require_subcommand(1);
  AnalyzeOptions analyze_opts;
  auto* fitts = analyze->add_subcommand("fitts", "Fitts' law analysis of session logs");
  fitts->add_option("logs", analyze_opts.logs, "Session CSVs (default: all logs in the conditions file)");
  fitts->add_option("--conditions", analyze_opts.conditions, "Condition JSON")->check(CLI::ExistingFile);
  fitts->add_option("--group-by", analyze_opts.group_by)->check(CLI::IsMember({"id", "trial"}));
  fitts->add_option("--out", analyze_opts.out, "Results CSV (default stdout)");
  fitts->add_option("--model-out", analyze_opts.model_out, "Regression model CSV");
  fitts->add_flag("--use-events", analyze_opts.use_events, "Use hit:A/hit:B tags instead of positions");

  auto* field = app.add_subcommand("field", "Acoustic field tools");
  field->require_subcommand(1);
  FieldOptions field_opts;
  auto* characterize = field->add_subcommand("characterize", "Locate, calibrate and linearize the trap");
  characterize->add_option("--config", field_opts.config, "Field JSON")->check(CLI::ExistingFile);
  characterize->add_option("--profile", field_opts.profile, "Write axis force profiles CSV");
  characterize->add_option("--half-range", field_opts.half_range)->check(CLI::PositiveNumber);
  characterize->add_option("--step", field_opts.step)->check(CLI::PositiveNumber);

  SimulateOptions sim_opts;
  auto* sim = app.add_subcommand("simulate", "Step response of the trap model");
  sim->add_option("--config", sim_opts.config, "Engine JSON")->check(CLI::ExistingFile);
  sim->add_option("--step", sim_opts.step, "Trap displacement x y z (m)")->expected(3);
  sim->add_option("--duration", sim_opts.duration)->check(CLI::PositiveNumber);
  sim->add_option("--rate", sim_opts.rate, "Samples per second")->check(CLI::PositiveNumber);
  sim->add_option("--out", sim_opts.out, "Trajectory CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*fitts) return analyze_fitts(analyze_opts);
    if (*characterize) return field_characterize(field_opts);
    if (*sim) return simulate(sim_opts);
    return serve(serve_opts);
  } catch (const std::exception& e) {
    std::cerr << "levisim: " << e.what() << '\n';
    return 1;
  }
}
