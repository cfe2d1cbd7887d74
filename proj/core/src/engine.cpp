#include "levisim/engine.hpp"

#include "levisim/csv.hpp"
#include "levisim/ingress.hpp"
#include "levisim/trap.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

namespace levisim::server {

const char* to_string(Mode mode) {
  switch (mode) {
    case Mode::steer: return "steer";
    case Mode::fitts: return "fitts";
    case Mode::beadbounce: return "beadbounce";
    case Mode::levishooter: return "levishooter";
  }
  return "steer";
}

Mode mode_from_string(std::string_view s) {
  if (s == "steer") return Mode::steer;
  if (s == "fitts") return Mode::fitts;
  if (s == "beadbounce") return Mode::beadbounce;
  if (s == "levishooter") return Mode::levishooter;
  throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

void EngineConfig::validate() const {
  if (!(tick_rate > 0.0) || tick_rate > 1e5) throw std::invalid_argument("tick rate out of range");
  model.validate();
  integrator.validate();
  gain.validate();
  if (!volume.contains(initial_trap)) throw std::invalid_argument("initial trap outside the volume");
  if (mode == Mode::fitts) task.validate(volume);
}

SimEngine::SimEngine(EngineConfig config)
    : config_(std::move(config)), stepper_(config_.model, config_.integrator) {
  config_.validate();
  trap_ = config_.initial_trap;
  input_ = config_.gain.control_origin + config_.gain.ratio * (trap_ - config_.gain.display_origin);
  state_.position = config_.initial_particle.value_or(trap_);
  switch (config_.mode) {
    case Mode::fitts:
      hits_ = std::make_unique<experiments::HitDetector>(config_.task);
      break;
    case Mode::beadbounce:
      bead_bounce_ = std::make_unique<games::BeadBounceGame>(config_.volume, config_.bead_bounce);
      trap_ = bead_bounce_->bead().position;
      state_.position = trap_;
      break;
    case Mode::levishooter:
      levi_shooter_ = std::make_unique<games::LeviShooterGame>(config_.volume, config_.levi_shooter);
      trap_ = levi_shooter_->bead().position;
      state_.position = trap_;
      break;
    case Mode::steer:
      break;
  }
}

std::uint64_t SimEngine::frame_time_us(std::uint64_t k) const {
  return static_cast<std::uint64_t>(std::llround(static_cast<double>(k + 1) * 1e6 / config_.tick_rate));
}

void SimEngine::advance(const Vec3& trap_begin, const Vec3& trap_end,
                        std::vector<std::string>& events) {
  const double dt = config_.tick_seconds();
  const double t_end = static_cast<double>(ticks_ + 1) * dt;
  if (!failed_) {
    try {
      state_ = stepper_.advance(state_, trap_begin, trap_end, dt);
    } catch (const IntegrationError&) {
      failed_ = true;
      state_.escaped = true;
      stepper_.reset();
      events.emplace_back("integration_failure");
    }
  }
  state_.time = t_end;
  if (state_.escaped && !escape_reported_) {
    escape_reported_ = true;
    events.emplace_back("escaped");
  }
}

TickResult SimEngine::tick(const TickInputs& inputs) {
  const double dt = config_.tick_seconds();
  std::vector<std::string> events;
  const Vec3 trap_begin = trap_;
  std::uint32_t flags = 0;

  if (config_.mode == Mode::steer || config_.mode == Mode::fitts) {
    if (inputs.trap) {
      if (!last_trap_seq_ || inputs.trap->sequence > *last_trap_seq_) {
        last_trap_seq_ = inputs.trap->sequence;
        input_ = inputs.trap->position;
        const GainResult g = apply_cd_gain(input_, config_.gain, config_.volume);
        trap_ = g.trap;
        if (g.clamped) events.emplace_back("clamped");
      }
    }
  } else if (bead_bounce_) {
    if (inputs.racket) {
      racket_.center = inputs.racket->center;
      racket_.normal = inputs.racket->normal;
    }
    racket_.velocity = last_racket_center_ ? Vec3((racket_.center - *last_racket_center_) / dt)
                                           : Vec3::Zero();
    last_racket_center_ = racket_.center;
    input_ = racket_.center;
    for (auto& e : bead_bounce_->tick(racket_, dt)) events.push_back(std::move(e));
    trap_ = bead_bounce_->bead().position;
  } else if (levi_shooter_) {
    if (inputs.gun) {
      gun_.origin = inputs.gun->origin;
      const double n = inputs.gun->direction.norm();
      gun_.direction = n > 0.0 ? Vec3(inputs.gun->direction / n) : gun_.direction;
      gun_.trigger = inputs.gun->trigger;
    }
    input_ = gun_.origin;
    for (auto& e : levi_shooter_->tick(gun_, dt)) {
      if (e == "shot_hit") flags |= protocol::flags::target_hit;
      events.push_back(std::move(e));
    }
    trap_ = levi_shooter_->bead().position;
  }

  advance(trap_begin, trap_, events);

  if (hits_) {
    if (auto hit = hits_->observe(state_.position, frame_time_us(ticks_))) {
      events.push_back(std::string("hit:") + *hit);
      flags |= protocol::flags::target_hit;
    }
  }
  if (state_.escaped) flags |= protocol::flags::escaped;

  TickResult r;
  r.update.sequence = static_cast<std::uint32_t>(ticks_ + 1);
  r.update.timestamp_us = frame_time_us(ticks_);
  r.update.position = state_.position;
  r.update.velocity = state_.velocity;
  r.update.flags = flags;
  r.frame.frame_us = r.update.timestamp_us;
  r.frame.input = input_;
  r.frame.trap = trap_;
  r.frame.particle = state_.position;
  for (std::size_t i = 0; i < events.size(); ++i) {
    if (i) r.frame.event += session::kEventSeparator;
    r.frame.event += events[i];
  }
  ++ticks_;
  return r;
}

nlohmann::json SimEngine::summary() const {
  if (bead_bounce_) return bead_bounce_->summary();
  if (levi_shooter_) return levi_shooter_->summary();
  if (hits_) {
    return {{"mode", "fitts"},
            {"condition", config_.task.name},
            {"hits", hits_->hits()},
            {"elapsed_s", static_cast<double>(ticks_) * config_.tick_seconds()}};
  }
  return nlohmann::json::object();
}

std::vector<protocol::TrapCommand> read_command_script(std::istream& in) {
  std::string line;
  std::size_t row = 1;
  if (!std::getline(in, line)) return {};
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t_us,x,y,z") throw ParseError("expected header t_us,x,y,z", row);
  std::vector<protocol::TrapCommand> out;
  std::uint32_t seq = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = csv::split(line, ',');
    if (fields.size() != 4) throw ParseError("expected 4 fields", row);
    try {
      protocol::TrapCommand c;
      c.sequence = ++seq;
      const auto t = csv::parse_int(fields[0]);
      if (t < 0) throw std::invalid_argument("negative timestamp");
      c.timestamp_us = static_cast<std::uint64_t>(t);
      c.position = Vec3(csv::parse_double(fields[1]), csv::parse_double(fields[2]),
                        csv::parse_double(fields[3]));
      if (!out.empty() && c.timestamp_us < out.back().timestamp_us) {
        throw std::invalid_argument("timestamps must not decrease");
      }
      out.push_back(c);
    } catch (const std::invalid_argument& e) {
      throw ParseError(std::string("row ") + std::to_string(row) + ": " + e.what(), row);
    }
  }
  return out;
}

std::vector<protocol::TrapCommand> read_command_script_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open command script " + path);
  return read_command_script(in);
}

void write_command_script(std::ostream& out, std::span<const protocol::TrapCommand> commands) {
  out << "t_us,x,y,z\n";
  std::string line;
  for (const auto& c : commands) {
    line = std::to_string(c.timestamp_us);
    for (int i = 0; i < 3; ++i) {
      line += ',';
      csv::append_double(line, c.position[i]);
    }
    line += '\n';
    out << line;
  }
}

ScriptRunStats run_script(SimEngine& engine, std::span<const protocol::TrapCommand> script,
                          std::uint64_t ticks,
                          const std::function<void(const TickResult&)>& sink) {
  CommandIngress ingress;
  std::size_t next = 0;
  const std::uint64_t start = engine.ticks();
  for (std::uint64_t k = 0; k < ticks; ++k) {
    const std::uint64_t tick_start_us = engine.ticks() == 0 ? 0 : engine.frame_time_us(engine.ticks() - 1);
    while (next < script.size() && script[next].timestamp_us <= tick_start_us) {
      const auto bytes = protocol::encode(script[next++]);
      ingress.ingest(bytes);
    }
    TickInputs in;
    in.trap = ingress.take();
    const TickResult r = engine.tick(in);
    if (sink) sink(r);
  }
  const auto s = ingress.stats();
  return ScriptRunStats{engine.ticks() - start, s.applied, s.dropped(), s.max_depth};
}

namespace {

Vec3 vec_from(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

}  // namespace

EngineConfig engine_config_from_json(const nlohmann::json& doc) {
  EngineConfig c;
  c.tick_rate = doc.value("tick_rate", c.tick_rate);
  if (doc.contains("mode")) c.mode = mode_from_string(doc.at("mode").get<std::string>());
  if (doc.contains("volume")) {
    const auto& v = doc.at("volume");
    const Vec3 size = v.contains("size") ? vec_from(v.at("size")) : c.volume.size();
    const Vec3 center = v.contains("center") ? vec_from(v.at("center")) : c.volume.center();
    c.volume = Box::centered(center, size);
  }
  c.initial_trap = c.volume.center();
  if (doc.contains("initial_trap")) c.initial_trap = vec_from(doc.at("initial_trap"));
  if (doc.contains("initial_particle")) c.initial_particle = vec_from(doc.at("initial_particle"));
  if (doc.contains("model")) {
    const auto& m = doc.at("model");
    c.model.mass = m.value("mass", c.model.mass);
    c.model.drag = m.value("drag", c.model.drag);
    if (m.contains("stiffness")) c.model.stiffness = vec_from(m.at("stiffness"));
    c.model.gravity = m.value("gravity", c.model.gravity);
    c.model.escape_margin = m.value("escape_margin", c.model.escape_margin);
    const std::string source = m.value("source", "linear");
    if (source == "full_field") {
      c.model.source = dynamics::ForceSource::full_field;
      const auto field_doc = doc.contains("field") ? doc.at("field") : nlohmann::json::object();
      auto setup = acoustics::build_trap(acoustics::field_config_from_json(field_doc));
      c.model.field_trap.center = setup.center;
      c.model.field_trap.field =
          std::make_shared<const acoustics::AcousticField>(std::move(setup.field));
    } else if (source != "linear") {
      throw std::invalid_argument("unknown force source '" + source + "'");
    }
  }
  c.model.volume = c.volume;
  if (doc.contains("integrator")) {
    const auto& i = doc.at("integrator");
    c.integrator.rel_tol = i.value("rel_tol", c.integrator.rel_tol);
    c.integrator.abs_tol_position = i.value("abs_tol_position", c.integrator.abs_tol_position);
    c.integrator.abs_tol_velocity = i.value("abs_tol_velocity", c.integrator.abs_tol_velocity);
    c.integrator.max_step = i.value("max_step", c.integrator.max_step);
    c.integrator.min_step = i.value("min_step", c.integrator.min_step);
  }
  if (doc.contains("gain")) {
    const auto& g = doc.at("gain");
    c.gain.ratio = g.value("ratio", c.gain.ratio);
    if (g.contains("control_origin")) c.gain.control_origin = vec_from(g.at("control_origin"));
    if (g.contains("display_origin")) c.gain.display_origin = vec_from(g.at("display_origin"));
  }
  if (doc.contains("task")) c.task = experiments::task_from_json(doc.at("task"));
  if (doc.contains("beadbounce")) c.bead_bounce = games::bead_bounce_params_from_json(doc.at("beadbounce"));
  if (doc.contains("levishooter")) c.levi_shooter = games::levi_shooter_params_from_json(doc.at("levishooter"));
  c.validate();
  return c;
}

}  // namespace levisim::server
