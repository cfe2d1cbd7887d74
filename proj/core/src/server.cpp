#include "levisim/server.hpp"

#include "levisim/trap.hpp"
#include "levisim/websocket_bridge.hpp"

#include <nlohmann/json.hpp>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <system_error>

namespace levisim::server {

namespace {

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (host.empty() || host == "0.0.0.0" || host == "*") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_DGRAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res) {
      throw std::runtime_error("cannot resolve host " + host);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
  }
  return addr;
}

std::pair<std::string, std::uint16_t> split_host_port(const std::string& host_port) {
  const auto colon = host_port.rfind(':');
  if (colon == std::string::npos) throw std::invalid_argument("expected host:port, got " + host_port);
  const int port = std::stoi(host_port.substr(colon + 1));
  if (port <= 0 || port > 65535) throw std::invalid_argument("bad port in " + host_port);
  return {host_port.substr(0, colon), static_cast<std::uint16_t>(port)};
}

nlohmann::json vec_to(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

}  // namespace

UdpSocket::UdpSocket(const std::string& bind_address, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw std::system_error(errno, std::generic_category(), "udp socket");
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr = resolve(bind_address, port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const int err = errno;
    ::close(fd_);
    throw std::system_error(err, std::generic_category(),
                            "udp bind " + bind_address + ":" + std::to_string(port));
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

UdpSocket::~UdpSocket() {
  if (fd_ >= 0) ::close(fd_);
}

std::optional<std::size_t> UdpSocket::receive(std::span<std::byte> buffer,
                                              std::chrono::milliseconds timeout,
                                              std::string* sender) {
  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  sockaddr_in from{};
  socklen_t len = sizeof(from);
  const ssize_t n = ::recvfrom(fd_, buffer.data(), buffer.size(), MSG_TRUNC,
                               reinterpret_cast<sockaddr*>(&from), &len);
  if (n < 0) {
    if (errno == EAGAIN || errno == EWOULDBLOCK || errno == EINTR) return std::nullopt;
    throw std::system_error(errno, std::generic_category(), "udp receive");
  }
  if (sender) {
    char host[INET_ADDRSTRLEN] = {};
    inet_ntop(AF_INET, &from.sin_addr, host, sizeof(host));
    *sender = std::string(host) + ":" + std::to_string(ntohs(from.sin_port));
  }
  return static_cast<std::size_t>(n);
}

void UdpSocket::send_to(std::span<const std::byte> data, const std::string& host_port) {
  const auto [host, port] = split_host_port(host_port);
  const sockaddr_in addr = resolve(host, port);
  ::sendto(fd_, data.data(), data.size(), 0, reinterpret_cast<const sockaddr*>(&addr), sizeof(addr));
}

PacingStats summarize_pacing(std::vector<double> lateness_ms, std::uint64_t catch_up_ticks) {
  PacingStats s;
  s.ticks = lateness_ms.size();
  s.catch_up_ticks = catch_up_ticks;
  if (lateness_ms.empty()) return s;
  std::sort(lateness_ms.begin(), lateness_ms.end());
  const auto at = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(lateness_ms.size()))) ;
    return lateness_ms[std::min(lateness_ms.size() - 1, idx == 0 ? 0 : idx - 1)];
  };
  s.p50_ms = at(0.50);
  s.p99_ms = at(0.99);
  s.max_ms = lateness_ms.back();
  return s;
}

ServerConfig server_config_from_json(const nlohmann::json& doc) {
  ServerConfig c;
  c.engine = engine_config_from_json(doc);
  c.bind_address = doc.value("bind", c.bind_address);
  c.udp_port = doc.value("udp_port", c.udp_port);
  c.ws_port = doc.value("ws_port", c.ws_port);
  c.enable_udp = doc.value("udp", c.enable_udp);
  c.enable_websocket = doc.value("websocket", c.enable_websocket);
  c.udp_peer = doc.value("udp_peer", c.udp_peer);
  c.static_dir = doc.value("static_dir", c.static_dir);
  c.replay_dir = doc.value("replay_dir", c.replay_dir);
  c.record_path = doc.value("record", c.record_path);
  c.summary_path = doc.value("summary", c.summary_path);
  c.duration = doc.value("duration", c.duration);
  c.paced = doc.value("paced", c.paced);
  c.spin_margin_ms = doc.value("spin_margin_ms", c.spin_margin_ms);
  if (!(c.duration >= 0.0)) throw std::invalid_argument("duration must be >= 0");
  if (!(c.spin_margin_ms >= 0.0)) throw std::invalid_argument("spin_margin_ms must be >= 0");
  return c;
}

ServerConfig load_server_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  return server_config_from_json(nlohmann::json::parse(in));
}

RealtimeServer::RealtimeServer(ServerConfig config)
    : config_(std::move(config)), engine_(config_.engine), udp_peer_(config_.udp_peer) {}

RealtimeServer::~RealtimeServer() { shutdown(); }

void RealtimeServer::start() {
  if (config_.enable_udp) {
    udp_ = std::make_unique<UdpSocket>(config_.bind_address, config_.udp_port);
    udp_thread_ = std::thread([this] { udp_loop(); });
  }
  if (config_.enable_websocket) {
    BridgeHandlers handlers;
    handlers.on_message = [this](const nlohmann::json& m) { handle_json(m); };
    handlers.on_malformed = [this] { trap_mailbox_.count_malformed(); };
    bridge_ = std::make_unique<WebSocketBridge>(config_.bind_address, config_.ws_port,
                                                HttpRoots{config_.static_dir, config_.replay_dir},
                                                std::move(handlers));
    bridge_->start();
  }
  if (!config_.record_path.empty()) {
    recorder_ = std::make_unique<session::SessionRecorder>(config_.record_path);
  }
}

void RealtimeServer::handle_json(const nlohmann::json& m) {
  const std::string type = m.is_object() ? m.value("type", "") : "";
  if (type == "trap") {
    if (auto c = protocol::trap_command_from_json(m)) trap_mailbox_.offer(*c);
    else trap_mailbox_.count_malformed();
  } else if (type == "racket") {
    if (auto c = protocol::racket_command_from_json(m)) racket_mailbox_.offer(*c);
    else racket_mailbox_.count_malformed();
  } else if (type == "gun") {
    if (auto c = protocol::gun_command_from_json(m)) gun_mailbox_.offer(*c);
    else gun_mailbox_.count_malformed();
  } else {
    trap_mailbox_.count_malformed();
  }
}

void RealtimeServer::udp_loop() {
  std::array<std::byte, 512> buffer{};
  std::string sender;
  while (!stopping_.load()) {
    std::optional<std::size_t> n;
    try {
      n = udp_->receive(buffer, std::chrono::milliseconds(50), &sender);
    } catch (const std::exception& e) {
      std::cerr << "udp ingress stopped: " << e.what() << '\n';
      return;
    }
    if (!n) continue;
    if (*n > buffer.size()) {
      trap_mailbox_.count_malformed();
      continue;
    }
    const auto error = trap_mailbox_.ingest(std::span<const std::byte>(buffer.data(), *n));
    if (!error && config_.udp_peer.empty()) {
      std::lock_guard lock(peer_mutex_);
      udp_peer_ = sender;
    }
  }
}

std::string RealtimeServer::tick_message(const TickResult& r, const SimEngine* engine) {
  nlohmann::json j = protocol::to_json(r.update);
  j["trap"] = vec_to(r.frame.trap);
  j["input"] = vec_to(r.frame.input);
  nlohmann::json events = nlohmann::json::array();
  std::string_view ev = r.frame.event;
  while (!ev.empty()) {
    const auto cut = ev.find(session::kEventSeparator);
    events.push_back(std::string(ev.substr(0, cut)));
    if (cut == std::string_view::npos) break;
    ev.remove_prefix(cut + 1);
  }
  j["events"] = std::move(events);
  if (!engine) return j.dump();
  if (const auto* g = engine->bead_bounce()) {
    j["game"] = {{"kind", "beadbounce"},
                 {"bead", vec_to(g->bead().position)},
                 {"speed", g->bead().speed},
                 {"score", g->session().score},
                 {"elapsed_s", g->session().elapsed},
                 {"danger_x", g->volume().center().x()},
                 {"state", g->session().state == games::GameState::over ? "over" : "running"}};
  } else if (const auto* g = engine->levi_shooter()) {
    j["game"] = {{"kind", "levishooter"},
                 {"bead", vec_to(g->bead().position)},
                 {"speed", g->bead().speed},
                 {"score", g->session().score},
                 {"miss_streak", g->session().miss_streak},
                 {"cooldown_s", g->session().cooldown},
                 {"elapsed_s", g->session().elapsed},
                 {"state", g->session().state == games::GameState::over ? "over" : "running"}};
  }
  return j.dump();
}

void RealtimeServer::emit(const TickResult& r, bool live) {
  if (udp_) {
    std::string peer;
    {
      std::lock_guard lock(peer_mutex_);
      peer = udp_peer_;
    }
    if (!peer.empty()) {
      const auto bytes = protocol::encode(r.update);
      try {
        udp_->send_to(bytes, peer);
      } catch (const std::exception& e) {
        std::cerr << "udp send failed: " << e.what() << '\n';
      }
    }
  }
  if (bridge_) bridge_->broadcast(tick_message(r, live ? &engine_ : nullptr));
}

PacingStats RealtimeServer::run(const std::atomic<bool>& stop) {
  using clock = std::chrono::steady_clock;
  const auto period = std::chrono::duration<double>(engine_.config().tick_seconds());
  const std::uint64_t max_ticks =
      config_.duration > 0.0
          ? static_cast<std::uint64_t>(std::llround(config_.duration * engine_.config().tick_rate))
          : 0;
  std::vector<double> lateness;
  std::uint64_t catch_up = 0;
  const auto start = clock::now();
  for (std::uint64_t k = 0; !stop.load() && (max_ticks == 0 || k < max_ticks); ++k) {
    if (config_.paced) {
      const auto deadline = start + std::chrono::duration_cast<clock::duration>(period * static_cast<double>(k));
      const auto now = clock::now();
      if (now < deadline) {
        // Coarse sleep, then yield until the deadline.
        const auto wake =
            deadline - std::chrono::duration_cast<clock::duration>(
                           std::chrono::duration<double, std::milli>(config_.spin_margin_ms));
        if (now < wake) std::this_thread::sleep_until(wake);
        while (clock::now() < deadline) std::this_thread::yield();
      } else if (now - deadline > period) {
        ++catch_up;
      }
      lateness.push_back(std::chrono::duration<double, std::milli>(clock::now() - deadline).count());
    }
    TickInputs inputs;
    inputs.trap = trap_mailbox_.take();
    inputs.racket = racket_mailbox_.take();
    inputs.gun = gun_mailbox_.take();
    const TickResult r = engine_.tick(inputs);
    if (recorder_) recorder_->push(r.frame);
    emit(r, true);
    if (observer_) observer_(r);
  }
  if (recorder_) recorder_->close();
  if (!config_.summary_path.empty()) {
    std::ofstream out(config_.summary_path);
    nlohmann::json s = engine_.summary();
    s["ticks"] = engine_.ticks();
    out << s.dump(2) << '\n';
  }
  return summarize_pacing(std::move(lateness), catch_up);
}

session::ReplayStats RealtimeServer::replay(std::span<const session::FrameRecord> frames,
                                            double speed) {
  return session::replay_session(
      frames, speed, [this](const protocol::ParticleUpdate& u, const session::FrameRecord& f) {
        TickResult r{u, f};
        emit(r, false);
        if (observer_) observer_(r);
      });
}

void RealtimeServer::shutdown() {
  stopping_.store(true);
  if (udp_thread_.joinable()) udp_thread_.join();
  if (bridge_) bridge_->stop();
  if (recorder_) recorder_->close();
}

std::uint16_t RealtimeServer::udp_port() const { return udp_ ? udp_->port() : 0; }
std::uint16_t RealtimeServer::ws_port() const { return bridge_ ? bridge_->port() : 0; }
std::size_t RealtimeServer::websocket_clients() const { return bridge_ ? bridge_->clients() : 0; }

}  // namespace levisim::server
