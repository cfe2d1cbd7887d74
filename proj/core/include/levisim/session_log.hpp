#pragma once

#include "levisim/common.hpp"
#include "levisim/protocol.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace levisim::session {

/// One rendered frame: timestamps in microseconds since session start.
struct FrameRecord {
  std::uint64_t frame_us = 0;
  Vec3 input = Vec3::Zero();
  Vec3 trap = Vec3::Zero();
  Vec3 particle = Vec3::Zero();
  std::string event;

  bool operator==(const FrameRecord&) const = default;
  bool has_event(std::string_view tag) const;
};

inline constexpr const char* kCsvHeader =
    "frame_us,in_x,in_y,in_z,trap_x,trap_y,trap_z,p_x,p_y,p_z,event";

/// Multiple events in one frame are joined with this separator.
inline constexpr char kEventSeparator = ';';

std::string format_row(const FrameRecord& frame);
/// `row` is the 1-based line number used in error messages.
FrameRecord parse_row(std::string_view line, std::size_t row);

void write_log(std::ostream& out, std::span<const FrameRecord> frames);
/// Throws ParseError naming the first bad row (bad header, field, or a
/// non-increasing timestamp).
std::vector<FrameRecord> read_log(std::istream& in);
std::vector<FrameRecord> read_log_file(const std::string& path);

/// Appends frames to a CSV file from a background thread, in push order.
/// close() (or destruction) drains everything pushed so far.
class SessionRecorder {
 public:
  explicit SessionRecorder(const std::string& path);
  ~SessionRecorder();
  SessionRecorder(const SessionRecorder&) = delete;
  SessionRecorder& operator=(const SessionRecorder&) = delete;

  void push(FrameRecord frame);
  void close();
  std::size_t written() const;

 private:
  void run();

  std::ofstream out_;
  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<FrameRecord> queue_;
  bool closing_ = false;
  std::size_t written_ = 0;
  std::thread worker_;
};

/// ParticleUpdates reconstructed from a log, without re-simulation. Velocity
/// is the backward difference of logged positions (zero for the first frame);
/// sequence numbers start at 1 as in the live stream.
std::vector<protocol::ParticleUpdate> updates_from_log(std::span<const FrameRecord> frames);

struct ReplayStats {
  std::size_t emitted = 0;
  std::chrono::steady_clock::duration wall_time{};
};

/// Re-emits the log's updates paced at `speed` times real time. speed must be
/// positive; infinity replays without pacing.
ReplayStats replay_session(std::span<const FrameRecord> frames, double speed,
                           const std::function<void(const protocol::ParticleUpdate&,
                                                    const FrameRecord&)>& sink);

}  // namespace levisim::session
