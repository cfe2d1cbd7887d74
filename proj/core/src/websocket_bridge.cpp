#include "levisim/websocket_bridge.hpp"

#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <vector>

namespace levisim::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
namespace fs = std::filesystem;

namespace {

bool safe_relative(const std::string& path) {
  if (path.empty() || path.front() == '/') return false;
  for (const auto& part : fs::path(path)) {
    if (part == "..") return false;
  }
  return true;
}

std::string mime_type(const fs::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".csv") return "text/csv";
  if (ext == ".png") return "image/png";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".wav") return "audio/wav";
  return "application/octet-stream";
}

std::optional<std::string> read_file(const fs::path& p) {
  std::error_code ec;
  if (!fs::is_regular_file(p, ec)) return std::nullopt;
  std::ifstream in(p, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

class WsSession;

namespace detail {

struct BridgeImpl : std::enable_shared_from_this<BridgeImpl> {
  std::string bind_address;
  std::uint16_t requested_port;
  HttpRoots roots;
  BridgeHandlers handlers;

  asio::io_context ioc;
  std::optional<tcp::acceptor> acceptor;
  std::thread thread;
  std::atomic<std::uint16_t> bound_port{0};
  std::atomic<bool> running{false};

  mutable std::mutex mutex;
  std::vector<std::weak_ptr<WsSession>> sessions;
  BridgeStats stats;

  void do_accept();
  http::response<http::string_body> handle_http(const http::request<http::string_body>& req);
  void count(std::uint64_t BridgeStats::*field) {
    std::lock_guard lock(mutex);
    ++(stats.*field);
  }
};

}  // namespace detail

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, std::shared_ptr<detail::BridgeImpl> bridge)
      : ws_(std::move(socket)), bridge_(std::move(bridge)) {}

  void accept(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->open_ = true;
      self->read();
    });
  }

  // Runs on the I/O thread.
  void send(std::shared_ptr<const std::string> text) {
    if (!open_) return;
    if (writing_) {
      if (pending_) bridge_->count(&BridgeStats::dropped_out);
      pending_ = std::move(text);
      return;
    }
    write(std::move(text));
  }

  bool is_open() const { return open_; }

  void close() {
    if (!open_) return;
    open_ = false;
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        return;
      }
      self->bridge_->count(&BridgeStats::messages_in);
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
      if (j.is_discarded()) {
        self->bridge_->count(&BridgeStats::malformed_in);
        if (self->bridge_->handlers.on_malformed) self->bridge_->handlers.on_malformed();
      } else if (self->bridge_->handlers.on_message) {
        self->bridge_->handlers.on_message(j);
      }
      self->read();
    });
  }

  void write(std::shared_ptr<const std::string> text) {
    writing_ = true;
    current_ = std::move(text);
    ws_.text(true);
    ws_.async_write(asio::buffer(*current_),
                    [self = shared_from_this()](beast::error_code ec, std::size_t) {
                      self->writing_ = false;
                      if (ec) {
                        self->open_ = false;
                        return;
                      }
                      self->bridge_->count(&BridgeStats::sent);
                      if (self->pending_) {
                        auto next = std::move(self->pending_);
                        self->pending_.reset();
                        self->write(std::move(next));
                      }
                    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  std::shared_ptr<detail::BridgeImpl> bridge_;
  beast::flat_buffer buffer_;
  std::shared_ptr<const std::string> current_;
  std::shared_ptr<const std::string> pending_;
  bool writing_ = false;
  bool open_ = false;

};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, std::shared_ptr<detail::BridgeImpl> bridge)
      : stream_(std::move(socket)), bridge_(std::move(bridge)) {}

  void run() {
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     [self = shared_from_this()](beast::error_code ec, std::size_t) {
                       if (ec) return;
                       self->on_request();
                     });
  }

 private:
  void on_request() {
    if (websocket::is_upgrade(req_)) {
      stream_.expires_never();
      auto ws = std::make_shared<WsSession>(stream_.release_socket(), bridge_);
      {
        std::lock_guard lock(bridge_->mutex);
        ++bridge_->stats.connections;
        auto& list = bridge_->sessions;
        list.erase(std::remove_if(list.begin(), list.end(),
                                  [](const auto& w) { return w.expired(); }),
                   list.end());
        list.push_back(ws);
      }
      ws->accept(std::move(req_));
      return;
    }
    bridge_->count(&BridgeStats::http_requests);
    res_ = std::make_shared<http::response<http::string_body>>(bridge_->handle_http(req_));
    http::async_write(stream_, *res_, [self = shared_from_this()](beast::error_code, std::size_t) {
      beast::error_code ec;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
    });
  }

  beast::tcp_stream stream_;
  std::shared_ptr<detail::BridgeImpl> bridge_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
  std::shared_ptr<http::response<http::string_body>> res_;
};

http::response<http::string_body> detail::BridgeImpl::handle_http(
    const http::request<http::string_body>& req) {
  const auto respond = [&](http::status status, std::string body, const std::string& type) {
    http::response<http::string_body> res{status, req.version()};
    res.set(http::field::server, "levisim");
    res.set(http::field::content_type, type);
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(false);
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  };
  if (req.method() != http::verb::get) {
    return respond(http::status::method_not_allowed, "GET only\n", "text/plain");
  }
  std::string target(req.target());
  if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);

  if (target == "/replay" || target == "/replay/") {
    nlohmann::json list = nlohmann::json::array();
    std::error_code ec;
    if (!roots.replay_dir.empty() && fs::is_directory(roots.replay_dir, ec)) {
      std::vector<std::string> names;
      for (const auto& entry : fs::directory_iterator(roots.replay_dir, ec)) {
        if (entry.is_regular_file() && entry.path().extension() == ".csv") {
          names.push_back(entry.path().filename().string());
        }
      }
      std::sort(names.begin(), names.end());
      for (auto& n : names) list.push_back(n);
    }
    return respond(http::status::ok, list.dump(), "application/json");
  }
  if (target.rfind("/replay/", 0) == 0) {
    const std::string name = target.substr(8);
    if (roots.replay_dir.empty() || !safe_relative(name) || name.find('/') != std::string::npos) {
      return respond(http::status::not_found, "not found\n", "text/plain");
    }
    if (auto body = read_file(fs::path(roots.replay_dir) / name)) {
      return respond(http::status::ok, std::move(*body), "text/csv");
    }
    return respond(http::status::not_found, "not found\n", "text/plain");
  }
  std::string rel;
  if (target == "/") rel = "index.html";
  else if (target.rfind("/static/", 0) == 0) rel = target.substr(8);
  if (!rel.empty() && !roots.static_dir.empty() && safe_relative(rel)) {
    const fs::path p = fs::path(roots.static_dir) / rel;
    if (auto body = read_file(p)) return respond(http::status::ok, std::move(*body), mime_type(p));
  }
  return respond(http::status::not_found, "not found\n", "text/plain");
}

void detail::BridgeImpl::do_accept() {
  acceptor->async_accept([self = shared_from_this()](beast::error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec == asio::error::operation_aborted || !self->acceptor->is_open()) return;
    } else {
      std::make_shared<HttpSession>(std::move(socket), self)->run();
    }
    self->do_accept();
  });
}

WebSocketBridge::WebSocketBridge(std::string bind_address, std::uint16_t port, HttpRoots roots,
                                 BridgeHandlers handlers)
    : impl_(std::make_shared<detail::BridgeImpl>()) {
  impl_->bind_address = std::move(bind_address);
  impl_->requested_port = port;
  impl_->roots = std::move(roots);
  impl_->handlers = std::move(handlers);
}

WebSocketBridge::~WebSocketBridge() { stop(); }

void WebSocketBridge::start() {
  if (impl_->running.exchange(true)) return;
  try {
    const auto address = asio::ip::make_address(
        impl_->bind_address.empty() ? std::string("0.0.0.0") : impl_->bind_address);
    const tcp::endpoint endpoint(address, impl_->requested_port);
    impl_->acceptor.emplace(impl_->ioc);
    impl_->acceptor->open(endpoint.protocol());
    impl_->acceptor->set_option(asio::socket_base::reuse_address(true));
    impl_->acceptor->bind(endpoint);
    impl_->acceptor->listen(asio::socket_base::max_listen_connections);
    impl_->bound_port = impl_->acceptor->local_endpoint().port();
  } catch (const std::exception& e) {
    impl_->running = false;
    throw std::runtime_error(std::string("websocket bind failed: ") + e.what());
  }
  impl_->do_accept();
  impl_->thread = std::thread([impl = impl_] {
    try {
      impl->ioc.run();
    } catch (const std::exception& e) {
      std::cerr << "websocket bridge stopped: " << e.what() << '\n';
    }
  });
}

void WebSocketBridge::stop() {
  if (!impl_ || !impl_->running.exchange(false)) return;
  asio::post(impl_->ioc, [impl = impl_] {
    beast::error_code ec;
    if (impl->acceptor) impl->acceptor->close(ec);
    std::vector<std::shared_ptr<WsSession>> live;
    {
      std::lock_guard lock(impl->mutex);
      for (auto& w : impl->sessions) {
        if (auto s = w.lock()) live.push_back(std::move(s));
      }
      impl->sessions.clear();
    }
    for (auto& s : live) s->close();
    impl->ioc.stop();
  });
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::uint16_t WebSocketBridge::port() const { return impl_->bound_port.load(); }

void WebSocketBridge::broadcast(std::string text) {
  if (!impl_->running.load()) return;
  auto shared = std::make_shared<const std::string>(std::move(text));
  asio::post(impl_->ioc, [impl = impl_, shared] {
    std::vector<std::shared_ptr<WsSession>> live;
    {
      std::lock_guard lock(impl->mutex);
      for (auto& w : impl->sessions) {
        if (auto s = w.lock()) live.push_back(std::move(s));
      }
    }
    for (auto& s : live) s->send(shared);
  });
}

std::size_t WebSocketBridge::clients() const {
  std::lock_guard lock(impl_->mutex);
  return static_cast<std::size_t>(std::count_if(
      impl_->sessions.begin(), impl_->sessions.end(), [](const auto& w) {
        auto s = w.lock();
        return s && s->is_open();
      }));
}

BridgeStats WebSocketBridge::stats() const {
  std::lock_guard lock(impl_->mutex);
  return impl_->stats;
}

}  // namespace levisim::server
