#include "levisim/engine.hpp"
#include "levisim/experiments.hpp"
#include "levisim/session_log.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace levisim;
namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(LEVISIM_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), pipe)) > 0) r.out.append(buf, n);
  const int st = ::pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("levisim_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  void write_script(const std::string& name, const std::vector<protocol::TrapCommand>& script) {
    std::ofstream out(path(name));
    server::write_command_script(out, script);
  }

  fs::path dir_;
};

std::vector<protocol::TrapCommand> sine_script(double seconds) {
  std::vector<protocol::TrapCommand> s;
  std::uint32_t seq = 0;
  for (std::uint64_t t = 0; t < static_cast<std::uint64_t>(seconds * 1e6); t += 16667) {
    s.push_back({++seq, t, Vec3(0.02 * std::sin(2.0 * t * 1e-6), 0, 0.01 * std::cos(3.0 * t * 1e-6))});
  }
  return s;
}

}  // namespace

TEST_F(Cli, HelpAndBadFlags) {
  const auto help = run("--help");
  EXPECT_EQ(help.status, 0);
  for (const char* flag : {"--config", "--record", "--replay", "--speed", "--headless"}) {
    EXPECT_NE(help.out.find(flag), std::string::npos) << flag;
  }
  EXPECT_NE(run("--speed -1").status, 0);
  EXPECT_NE(run("--speed 0").status, 0);
  EXPECT_NE(run("--replay /nonexistent.csv").status, 0);
  EXPECT_NE(run("analyze fitts").status, 0);
  EXPECT_NE(run("bogus").status, 0);
}

TEST_F(Cli, ScriptedRunIsDeterministicAndReplays) {
  write_script("cmds.csv", sine_script(3.0));
  const auto a = run("--script " + path("cmds.csv") + " --duration 3 --record " + path("a.csv"));
  const auto b = run("--script " + path("cmds.csv") + " --duration 3 --record " + path("b.csv"));
  ASSERT_EQ(a.status, 0);
  ASSERT_EQ(b.status, 0);
  const auto summary = nlohmann::json::parse(a.out);
  EXPECT_EQ(summary["ticks"], 270);
  EXPECT_LE(summary["max_depth"].get<int>(), 1);
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  const auto frames = session::read_log_file(path("a.csv"));
  ASSERT_EQ(frames.size(), 270u);
  const auto text = slurp(path("a.csv"));
  EXPECT_EQ(text.substr(0, text.find('\n')),
            "frame_us,in_x,in_y,in_z,trap_x,trap_y,trap_z,p_x,p_y,p_z,event");

  const auto replay = run("--replay " + path("a.csv") + " --speed 10 --headless --udp-port 0");
  ASSERT_EQ(replay.status, 0);
  const auto r = nlohmann::json::parse(replay.out);
  EXPECT_EQ(r["emitted"], 270);
  EXPECT_NEAR(r["wall_s"].get<double>(), 269.0 / 90.0 / 10.0, 0.05);
}

TEST_F(Cli, ConfigFileAndSummary) {
  std::ofstream(path("cfg.json")) << R"({"tick_rate": 90, "mode": "beadbounce", "udp": false,
                                          "websocket": false})";
  write_script("empty.csv", {});
  const auto r = run("--config " + path("cfg.json") + " --script " + path("empty.csv") +
                     " --duration 1 --summary " + path("summary.json"));
  ASSERT_EQ(r.status, 0);
  std::ifstream in(path("summary.json"));
  const auto s = nlohmann::json::parse(in);
  EXPECT_EQ(s["game"], "beadbounce");
  EXPECT_EQ(s["ticks"], 90);
}

TEST_F(Cli, HeadlessServeRunsForDuration) {
  const auto r = run("--headless --udp-port 0 --duration 0.5 --unpaced --record " + path("live.csv"));
  ASSERT_EQ(r.status, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["ticks"], 45);
  EXPECT_EQ(j["trap_commands"]["received"], 0);
  EXPECT_EQ(session::read_log_file(path("live.csv")).size(), 45u);
}

TEST_F(Cli, AnalyzeFittsOnScriptedLogs) {
  const auto conditions = experiments::default_conditions();
  const std::uint64_t dwell[2] = {135, 180};
  nlohmann::json cond{{"conditions", nlohmann::json::array()}};
  for (int c = 0; c < 2; ++c) {
    const auto& task = conditions[c];
    nlohmann::json cfg{{"mode", "fitts"},
                       {"task", experiments::task_to_json(task)},
                       {"initial_trap", {task.target_b.x(), task.target_b.y(), task.target_b.z()}},
                       {"initial_particle", {task.target_b.x(), task.target_b.y(), task.target_b.z()}}};
    const std::string cfg_name = "fitts" + std::to_string(c) + ".json";
    std::ofstream(path(cfg_name)) << cfg.dump();
    server::SimEngine clock(server::EngineConfig{});
    std::vector<protocol::TrapCommand> script;
    for (std::uint64_t m = 0; m < 71; ++m) {
      const std::uint64_t k = m * dwell[c];
      script.push_back({static_cast<std::uint32_t>(m + 1), k == 0 ? 0 : clock.frame_time_us(k - 1),
                        task.target(m % 2 == 0 ? 0 : 1)});
    }
    const std::string script_name = "fitts" + std::to_string(c) + "_cmds.csv";
    write_script(script_name, script);
    const std::string log = "fitts" + std::to_string(c) + ".csv";
    const auto r = run("--config " + path(cfg_name) + " --script " + path(script_name) + " --duration " +
                       std::to_string((71.0 * dwell[c] + 10) / 90.0) + " --record " + path(log));
    ASSERT_EQ(r.status, 0);
    auto entry = experiments::task_to_json(task);
    entry["log"] = log;
    cond["conditions"].push_back(entry);
  }
  std::ofstream(path("conditions.json")) << cond.dump(2);

  const auto r = run("analyze fitts --conditions " + path("conditions.json") + " --group-by id --out " +
                     path("results.csv") + " --model-out " + path("model.csv"));
  ASSERT_EQ(r.status, 0);
  std::ifstream results(path("results.csv"));
  std::string header, row;
  std::getline(results, header);
  EXPECT_EQ(header, "condition,id_bits,mean_mt_s,n_used,n_discarded");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(results, row)) {
    std::vector<std::string> cells;
    std::stringstream ss(row);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  ASSERT_EQ(rows.size(), 2u);
  // 2.044 bits at 1.5 s, 2.858 bits at 2.0 s.
  EXPECT_NEAR(std::stod(rows[0][1]), 2.044, 0.001);
  EXPECT_EQ(std::stod(rows[0][2]), 1.5);
  EXPECT_EQ(rows[0][3], "50");
  EXPECT_EQ(rows[0][4], "20");
  EXPECT_EQ(std::stod(rows[1][2]), 2.0);

  std::ifstream model(path("model.csv"));
  std::getline(model, header);
  EXPECT_EQ(header, "a_s,b_s_per_bit,r2,tp_bits_per_s");
  std::getline(model, row);
  const double slope = std::stod(row.substr(row.find(',') + 1));
  const double id0 = experiments::index_of_difficulty(0.05, conditions[0].width);
  const double id1 = experiments::index_of_difficulty(0.05, conditions[1].width);
  EXPECT_NEAR(slope, 0.5 / (id1 - id0), 1e-9);

  // Hit tags in the event column give the same answer.
  const auto ev = run("analyze fitts --use-events --conditions " + path("conditions.json"));
  ASSERT_EQ(ev.status, 0);
  EXPECT_EQ(ev.out, slurp(path("results.csv")));
  // A positional log selects a subset.
  const auto one = run("analyze fitts " + path("fitts1.csv") + " --group-by trial --conditions " +
                       path("conditions.json"));
  ASSERT_EQ(one.status, 0);
  EXPECT_EQ(std::count(one.out.begin(), one.out.end(), '\n'), 2);
}

TEST_F(Cli, FieldCharacterizeAndSimulate) {
  const auto r = run("field characterize --profile " + path("profile.csv") + " --half-range 0.005 --step 0.001");
  ASSERT_EQ(r.status, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_NEAR(j["diameters_m"][1].get<double>(), 4.742e-3, 5e-5);
  EXPECT_NEAR(j["max_force_N"][1].get<double>(), 2.2e-4, 1e-8);
  EXPECT_GT(j["ratio_y_x"].get<double>(), 10.0);
  std::ifstream profile(path("profile.csv"));
  std::string header;
  std::getline(profile, header);
  EXPECT_EQ(header, "axis,displacement_m,Fx_N,Fy_N,Fz_N");

  const auto sim = run("simulate --step 0.005 0 0 --duration 0.1 --rate 100");
  ASSERT_EQ(sim.status, 0);
  EXPECT_EQ(std::count(sim.out.begin(), sim.out.end(), '\n'), 12);
  EXPECT_EQ(sim.out.substr(0, 9), "t_s,x_m,y");
}
