#pragma once

#include "levisim/engine.hpp"
#include "levisim/ingress.hpp"
#include "levisim/session_log.hpp"

#include <nlohmann/json_fwd.hpp>

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace levisim::server {

class WebSocketBridge;

struct ServerConfig {
  EngineConfig engine;
  std::string bind_address = "127.0.0.1";
  std::uint16_t udp_port = 7201;
  std::uint16_t ws_port = 7202;
  bool enable_udp = true;
  bool enable_websocket = true;
  /// "host:port" for outbound UDP updates; defaults to the last trap sender.
  std::string udp_peer;
  std::string static_dir;
  std::string replay_dir = ".";
  std::string record_path;
  std::string summary_path;
  /// Simulated seconds to run; 0 runs until stopped.
  double duration = 0.0;
  bool paced = true;
  /// Each tick sleeps until this long before its deadline and then spins.
  /// A value of one tick period or more busy-waits the whole time.
  double spin_margin_ms = 1.5;
};

ServerConfig server_config_from_json(const nlohmann::json& doc);
ServerConfig load_server_config(const std::string& path);

/// Lateness of tick wake-ups relative to their deadlines.
struct PacingStats {
  std::uint64_t ticks = 0;
  std::uint64_t catch_up_ticks = 0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
};

PacingStats summarize_pacing(std::vector<double> lateness_ms, std::uint64_t catch_up_ticks);

/// Blocking POSIX UDP socket.
class UdpSocket {
 public:
  UdpSocket(const std::string& bind_address, std::uint16_t port);
  ~UdpSocket();
  UdpSocket(const UdpSocket&) = delete;
  UdpSocket& operator=(const UdpSocket&) = delete;

  std::uint16_t port() const { return port_; }
  /// Returns the datagram size, or nullopt on timeout.
  std::optional<std::size_t> receive(std::span<std::byte> buffer, std::chrono::milliseconds timeout,
                                     std::string* sender = nullptr);
  void send_to(std::span<const std::byte> data, const std::string& host_port);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Network ingress, 90 Hz tick loop and recorder around a SimEngine.
class RealtimeServer {
 public:
  explicit RealtimeServer(ServerConfig config);
  ~RealtimeServer();
  RealtimeServer(const RealtimeServer&) = delete;
  RealtimeServer& operator=(const RealtimeServer&) = delete;

  /// Binds the endpoints and starts the ingress threads.
  void start();
  /// Runs the tick loop on the calling thread until `stop` is set or the
  /// configured duration has been simulated.
  PacingStats run(const std::atomic<bool>& stop);
  /// Re-emits a recorded session to connected clients instead of simulating.
  session::ReplayStats replay(std::span<const session::FrameRecord> frames, double speed);
  void shutdown();

  std::uint16_t udp_port() const;
  std::uint16_t ws_port() const;
  const SimEngine& engine() const { return engine_; }
  MailboxStats trap_stats() const { return trap_mailbox_.stats(); }
  MailboxStats racket_stats() const { return racket_mailbox_.stats(); }
  MailboxStats gun_stats() const { return gun_mailbox_.stats(); }
  std::size_t websocket_clients() const;

  /// Called on the tick thread after every tick.
  void set_tick_observer(std::function<void(const TickResult&)> observer) {
    observer_ = std::move(observer);
  }

  /// JSON text sent to WebSocket clients for one tick: the particle message
  /// plus trap, input, events and (with a game engine) the game state.
  static std::string tick_message(const TickResult& result, const SimEngine* engine);

 private:
  void handle_json(const nlohmann::json& message);
  void udp_loop();
  void emit(const TickResult& result, bool live);

  ServerConfig config_;
  SimEngine engine_;
  CommandIngress trap_mailbox_;
  Mailbox<protocol::RacketCommand> racket_mailbox_;
  Mailbox<protocol::GunCommand> gun_mailbox_;
  std::unique_ptr<UdpSocket> udp_;
  std::unique_ptr<WebSocketBridge> bridge_;
  std::unique_ptr<session::SessionRecorder> recorder_;
  std::thread udp_thread_;
  std::atomic<bool> stopping_{false};
  mutable std::mutex peer_mutex_;
  std::string udp_peer_;
  std::function<void(const TickResult&)> observer_;
};

}  // namespace levisim::server
