#include <charconv>
#include <deque>
#include <iostream>
#include <limits>
#include <thread>

#include <boost/asio/dispatch.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/post.hpp>
#include <boost/asio/strand.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "oscmon/service.hpp"

namespace oscmon::service {
namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

std::string_view target_of(const Request& req) {
  const auto t = req.target();
  return {t.data(), t.size()};
}

Response json_response(const Request& req, http::status status, const nlohmann::json& body) {
  Response res{status, req.version()};
  res.set(http::field::content_type, "application/json");
  res.set(http::field::access_control_allow_origin, "*");
  res.keep_alive(req.keep_alive());
  res.body() = body.dump();
  res.prepare_payload();
  return res;
}

Response error_response(const Request& req, http::status status, const std::string& message) {
  return json_response(req, status, {{"error", message}});
}

// Query parameter `key` from a target like /api/history?from=1&to=2.
std::optional<std::string> query_param(std::string_view target, std::string_view key) {
  const auto q = target.find('?');
  if (q == std::string_view::npos) return std::nullopt;
  auto rest = target.substr(q + 1);
  while (!rest.empty()) {
    const auto amp = rest.find('&');
    const auto part = amp == std::string_view::npos ? rest : rest.substr(0, amp);
    const auto eq = part.find('=');
    const auto name = eq == std::string_view::npos ? part : part.substr(0, eq);
    if (name == key) {
      return eq == std::string_view::npos ? std::string() : std::string(part.substr(eq + 1));
    }
    if (amp == std::string_view::npos) break;
    rest = rest.substr(amp + 1);
  }
  return std::nullopt;
}

std::optional<std::int64_t> parse_ms(const std::string& s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

Response handle_history(ServiceContext& ctx, const Request& req) {
  std::int64_t from = std::numeric_limits<std::int64_t>::min();
  std::int64_t to = std::numeric_limits<std::int64_t>::max();
  for (auto [key, dst] : {std::pair{"from", &from}, std::pair{"to", &to}}) {
    if (auto raw = query_param(target_of(req), key)) {
      auto v = parse_ms(*raw);
      if (!v) return error_response(req, http::status::bad_request, std::string(key) + " must be integer ms");
      *dst = *v;
    }
  }
  if (from > to) return error_response(req, http::status::bad_request, "from must not exceed to");
  nlohmann::json events = nlohmann::json::array();
  std::vector<std::string> warnings;
  if (ctx.store) {
    for (const auto& e : ctx.store->read_range(from, to, &warnings)) events.push_back(events::to_json(e));
  }
  return json_response(req, http::status::ok, {{"events", std::move(events)}, {"warnings", warnings}});
}

Response handle_put_config(ServiceContext& ctx, const Request& req) {
  nlohmann::json patch;
  try {
    patch = nlohmann::json::parse(req.body());
  } catch (const nlohmann::json::exception& e) {
    return error_response(req, http::status::bad_request, std::string("body is not JSON: ") + e.what());
  }
  auto res = ctx.config.put(patch);
  if (!res.accepted) {
    nlohmann::json errs = nlohmann::json::array();
    for (const auto& fe : res.errors) errs.push_back({{"field", fe.field}, {"message", fe.message}});
    auto body = ctx.config.to_json();
    body["errors"] = std::move(errs);
    return json_response(req, http::status::unprocessable_entity, body);
  }
  return json_response(req, http::status::ok, ctx.config.to_json());
}

Response handle_request(ServiceContext& ctx, const Request& req) {
  const std::string_view target = target_of(req);
  const auto path = target.substr(0, target.find('?'));
  if (req.method() == http::verb::options) {
    Response res{http::status::no_content, req.version()};
    res.set(http::field::access_control_allow_origin, "*");
    res.set(http::field::access_control_allow_methods, "GET, PUT, OPTIONS");
    res.set(http::field::access_control_allow_headers, "Content-Type");
    res.keep_alive(req.keep_alive());
    res.prepare_payload();
    return res;
  }
  if (path == "/api/config") {
    if (req.method() == http::verb::get) return json_response(req, http::status::ok, ctx.config.to_json());
    if (req.method() == http::verb::put) return handle_put_config(ctx, req);
    return error_response(req, http::status::method_not_allowed, "use GET or PUT");
  }
  if (path == "/api/history") {
    if (req.method() != http::verb::get) return error_response(req, http::status::method_not_allowed, "use GET");
    return handle_history(ctx, req);
  }
  if (path == "/api/status") {
    if (req.method() != http::verb::get) return error_response(req, http::status::method_not_allowed, "use GET");
    return json_response(req, http::status::ok, ctx.status_json());
  }
  return error_response(req, http::status::not_found, "no such endpoint");
}

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket&& socket, ServiceContext& ctx) : ws_(std::move(socket)), ctx_(ctx) {}

  void run(Request req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, beast::bind_front_handler(&WsSession::on_accept, shared_from_this()));
  }

 private:
  void on_accept(beast::error_code ec) {
    if (ec) return;
    ws_.text(true);
    sub_ = ctx_.hub.subscribe();
    std::weak_ptr<WsSession> weak = shared_from_this();
    sub_->set_notify([weak] {
      if (auto self = weak.lock()) {
        net::post(self->ws_.get_executor(), [self] { self->pump(); });
      }
    });
    do_read();
    pump();
  }

  void do_read() {
    ws_.async_read(in_, beast::bind_front_handler(&WsSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec) {
      close();
      return;
    }
    // Clients may send {"type":"ping"}; anything else is ignored.
    try {
      auto msg = nlohmann::json::parse(beast::buffers_to_string(in_.data()));
      if (msg.is_object() && msg.value("type", "") == "ping") {
        out_.push_back(nlohmann::json{{"type", "pong"}}.dump());
        pump();
      }
    } catch (const nlohmann::json::exception&) {
    }
    in_.consume(in_.size());
    do_read();
  }

  void pump() {
    if (closed_ || writing_) return;
    if (out_.empty()) {
      if (auto m = sub_->pop()) out_.push_back(std::move(*m));
    }
    if (out_.empty()) return;
    writing_ = true;
    ws_.async_write(net::buffer(out_.front()),
                    beast::bind_front_handler(&WsSession::on_write, shared_from_this()));
  }

  void on_write(beast::error_code ec, std::size_t) {
    writing_ = false;
    out_.pop_front();
    if (ec) {
      close();
      return;
    }
    pump();
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    if (sub_) {
      sub_->set_notify({});
      ctx_.hub.unsubscribe(sub_);
    }
  }

  websocket::stream<beast::tcp_stream> ws_;
  ServiceContext& ctx_;
  beast::flat_buffer in_;
  std::deque<std::string> out_;
  std::shared_ptr<Subscription> sub_;
  bool writing_ = false;
  bool closed_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket&& socket, ServiceContext& ctx) : stream_(std::move(socket)), ctx_(ctx) {}

  void run() {
    net::dispatch(stream_.get_executor(),
                  beast::bind_front_handler(&HttpSession::do_read, shared_from_this()));
  }

 private:
  void do_read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_,
                     beast::bind_front_handler(&HttpSession::on_read, shared_from_this()));
  }

  void on_read(beast::error_code ec, std::size_t) {
    if (ec == http::error::end_of_stream) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    if (ec) return;
    if (websocket::is_upgrade(req_)) {
      const std::string_view target = target_of(req_);
      if (target.substr(0, target.find('?')) == "/api/stream") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), ctx_)->run(std::move(req_));
        return;
      }
    }
    res_ = std::make_shared<Response>(handle_request(ctx_, req_));
    http::async_write(stream_, *res_,
                      beast::bind_front_handler(&HttpSession::on_write, shared_from_this(),
                                                res_->need_eof()));
  }

  void on_write(bool close, beast::error_code ec, std::size_t) {
    if (ec) return;
    if (close) {
      beast::error_code ignored;
      stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    res_.reset();
    do_read();
  }

  beast::tcp_stream stream_;
  ServiceContext& ctx_;
  beast::flat_buffer buffer_;
  Request req_;
  std::shared_ptr<Response> res_;
};

class Listener : public std::enable_shared_from_this<Listener> {
 public:
  Listener(net::io_context& ioc, tcp::endpoint endpoint, ServiceContext& ctx)
      : ioc_(ioc), acceptor_(net::make_strand(ioc)), ctx_(ctx) {
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(net::socket_base::max_listen_connections);
  }

  void run() { do_accept(); }
  unsigned short port() const { return acceptor_.local_endpoint().port(); }
  void close() {
    net::post(acceptor_.get_executor(), [self = shared_from_this()] {
      beast::error_code ignored;
      self->acceptor_.close(ignored);
    });
  }

 private:
  void do_accept() {
    acceptor_.async_accept(net::make_strand(ioc_),
                           beast::bind_front_handler(&Listener::on_accept, shared_from_this()));
  }

  void on_accept(beast::error_code ec, tcp::socket socket) {
    if (ec == net::error::operation_aborted) return;
    if (!ec) std::make_shared<HttpSession>(std::move(socket), ctx_)->run();
    if (acceptor_.is_open()) do_accept();
  }

  net::io_context& ioc_;
  tcp::acceptor acceptor_;
  ServiceContext& ctx_;
};

}  // namespace

struct Server::Impl {
  ServiceContext& ctx;
  ServerOptions options;
  net::io_context ioc;
  std::shared_ptr<Listener> listener;
  std::vector<std::thread> threads;
  unsigned short port = 0;

  Impl(ServiceContext& c, ServerOptions o) : ctx(c), options(std::move(o)), ioc(std::max(1, options.io_threads)) {}
};

Server::Server(ServiceContext& ctx, ServerOptions options)
    : impl_(std::make_unique<Impl>(ctx, std::move(options))) {}

Server::~Server() { stop(); }

void Server::start() {
  if (impl_->listener) return;
  boost::system::error_code ec;
  const auto address = net::ip::make_address(impl_->options.address, ec);
  if (ec) throw Error(ErrorKind::InvalidArgument, "bad listen address " + impl_->options.address);
  try {
    impl_->listener = std::make_shared<Listener>(impl_->ioc, tcp::endpoint{address, impl_->options.port},
                                                 impl_->ctx);
  } catch (const boost::system::system_error& e) {
    throw Error(ErrorKind::InvalidArgument, std::string("listen: ") + e.what());
  }
  impl_->port = impl_->listener->port();
  impl_->listener->run();
  for (int i = 0; i < std::max(1, impl_->options.io_threads); ++i) {
    impl_->threads.emplace_back([this] { impl_->ioc.run(); });
  }
}

void Server::stop() {
  if (!impl_ || impl_->threads.empty()) return;
  impl_->listener->close();
  impl_->ioc.stop();
  for (auto& t : impl_->threads) t.join();
  impl_->threads.clear();
}

unsigned short Server::port() const { return impl_->port; }

}  // namespace oscmon::service
