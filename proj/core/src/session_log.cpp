#include "levisim/session_log.hpp"

#include "levisim/csv.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace levisim::session {

bool FrameRecord::has_event(std::string_view tag) const {
  std::string_view rest = event;
  while (!rest.empty()) {
    const auto pos = rest.find(kEventSeparator);
    const auto item = rest.substr(0, pos);
    if (item == tag) return true;
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }
  return false;
}

std::string format_row(const FrameRecord& f) {
  std::string line = std::to_string(f.frame_us);
  for (const Vec3* v : {&f.input, &f.trap, &f.particle}) {
    for (int i = 0; i < 3; ++i) {
      line += ',';
      csv::append_double(line, (*v)[i]);
    }
  }
  line += ',';
  line += f.event;
  return line;
}

FrameRecord parse_row(std::string_view line, std::size_t row) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  const auto fields = csv::split(line);
  if (fields.size() != 11) {
    throw ParseError("row " + std::to_string(row) + ": expected 11 fields, got " +
                         std::to_string(fields.size()),
                     row);
  }
  FrameRecord f;
  try {
    const long long t = csv::parse_int(fields[0]);
    if (t < 0) throw std::invalid_argument("negative timestamp");
    f.frame_us = static_cast<std::uint64_t>(t);
    Vec3* targets[] = {&f.input, &f.trap, &f.particle};
    for (int v = 0; v < 3; ++v) {
      for (int i = 0; i < 3; ++i) (*targets[v])[i] = csv::parse_double(fields[1 + 3 * v + i]);
    }
  } catch (const std::invalid_argument& e) {
    throw ParseError("row " + std::to_string(row) + ": " + e.what(), row);
  }
  f.event = std::string(fields[10]);
  return f;
}

void write_log(std::ostream& out, std::span<const FrameRecord> frames) {
  out << kCsvHeader << '\n';
  for (const auto& f : frames) out << format_row(f) << '\n';
}

std::vector<FrameRecord> read_log(std::istream& in) {
  std::vector<FrameRecord> frames;
  std::string line;
  std::size_t row = 0;
  if (!std::getline(in, line)) return frames;
  ++row;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCsvHeader) throw ParseError("row 1: unexpected header", 1);
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    FrameRecord f = parse_row(line, row);
    if (!frames.empty() && f.frame_us <= frames.back().frame_us) {
      throw ParseError("row " + std::to_string(row) + ": timestamp not increasing", row);
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<FrameRecord> read_log_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open session log " + path);
  return read_log(in);
}

SessionRecorder::SessionRecorder(const std::string& path) : out_(path, std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open recording " + path);
  out_ << kCsvHeader << '\n';
  worker_ = std::thread([this] { run(); });
}

SessionRecorder::~SessionRecorder() { close(); }

void SessionRecorder::push(FrameRecord frame) {
  {
    std::lock_guard lock(mutex_);
    if (closing_) throw std::logic_error("recorder already closed");
    queue_.push_back(std::move(frame));
  }
  cv_.notify_one();
}

void SessionRecorder::close() {
  {
    std::lock_guard lock(mutex_);
    if (closing_ && !worker_.joinable()) return;
    closing_ = true;
  }
  cv_.notify_one();
  if (worker_.joinable()) worker_.join();
  out_.flush();
}

std::size_t SessionRecorder::written() const {
  std::lock_guard lock(mutex_);
  return written_;
}

void SessionRecorder::run() {
  std::unique_lock lock(mutex_);
  for (;;) {
    cv_.wait(lock, [this] { return closing_ || !queue_.empty(); });
    if (queue_.empty() && closing_) break;
    std::deque<FrameRecord> batch;
    batch.swap(queue_);
    lock.unlock();
    std::string chunk;
    for (const auto& f : batch) {
      chunk += format_row(f);
      chunk += '\n';
    }
    out_ << chunk;
    lock.lock();
    written_ += batch.size();
  }
}

std::vector<protocol::ParticleUpdate> updates_from_log(std::span<const FrameRecord> frames) {
  std::vector<protocol::ParticleUpdate> out;
  out.reserve(frames.size());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    protocol::ParticleUpdate u;
    u.sequence = static_cast<std::uint32_t>(i + 1);
    u.timestamp_us = frames[i].frame_us;
    u.position = frames[i].particle;
    if (i > 0) {
      const double dt = 1e-6 * static_cast<double>(frames[i].frame_us - frames[i - 1].frame_us);
      u.velocity = (frames[i].particle - frames[i - 1].particle) / dt;
    }
    if (frames[i].has_event("escaped")) u.flags |= protocol::flags::escaped;
    if (frames[i].has_event("hit:A") || frames[i].has_event("hit:B") ||
        frames[i].has_event("shot_hit")) {
      u.flags |= protocol::flags::target_hit;
    }
    out.push_back(u);
  }
  return out;
}

ReplayStats replay_session(std::span<const FrameRecord> frames, double speed,
                           const std::function<void(const protocol::ParticleUpdate&,
                                                    const FrameRecord&)>& sink) {
  if (!(speed > 0.0)) throw std::invalid_argument("replay speed must be positive");
  using clock = std::chrono::steady_clock;
  const auto updates = updates_from_log(frames);
  ReplayStats stats;
  const auto start = clock::now();
  for (std::size_t i = 0; i < updates.size(); ++i) {
    if (std::isfinite(speed)) {
      const double offset_us =
          static_cast<double>(frames[i].frame_us - frames.front().frame_us) / speed;
      std::this_thread::sleep_until(
          start + std::chrono::microseconds(static_cast<long long>(std::llround(offset_us))));
    }
    sink(updates[i], frames[i]);
    ++stats.emitted;
  }
  stats.wall_time = clock::now() - start;
  return stats;
}

}  // namespace levisim::session
