#pragma once

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

namespace levisim::server {

namespace detail {
struct BridgeImpl;
}

struct BridgeHandlers {
  /// Called on the bridge thread for every text frame that parses as JSON.
  std::function<void(const nlohmann::json&)> on_message;
  /// Called for frames that are not valid JSON.
  std::function<void()> on_malformed;
};

struct HttpRoots {
  /// GET /static/<path> and GET / (index.html) are served from here when set.
  std::string static_dir;
  /// GET /replay lists *.csv files; GET /replay/<name> returns one.
  std::string replay_dir;
};

struct BridgeStats {
  std::uint64_t connections = 0;
  std::uint64_t messages_in = 0;
  std::uint64_t malformed_in = 0;
  std::uint64_t sent = 0;
  /// Outbound frames replaced by a newer one before a slow client took them.
  std::uint64_t dropped_out = 0;
  std::uint64_t http_requests = 0;
};

/// WebSocket + HTTP endpoint on one port, running its own I/O thread.
/// Inbound messages go to the handlers; broadcast() sends to every client
/// with a one-frame latest-wins outbound slot per client.
class WebSocketBridge {
 public:
  WebSocketBridge(std::string bind_address, std::uint16_t port, HttpRoots roots,
                  BridgeHandlers handlers);
  ~WebSocketBridge();
  WebSocketBridge(const WebSocketBridge&) = delete;
  WebSocketBridge& operator=(const WebSocketBridge&) = delete;

  /// Binds and starts the I/O thread. Throws std::runtime_error on bind failure.
  void start();
  void stop();

  /// Bound port (useful when constructed with port 0).
  std::uint16_t port() const;
  void broadcast(std::string text);
  std::size_t clients() const;
  BridgeStats stats() const;

 private:
  std::shared_ptr<detail::BridgeImpl> impl_;
};

}  // namespace levisim::server
