#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <boost/asio/connect.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "oscmon/config_io.hpp"
#include "oscmon/service.hpp"
#include "oscmon/synth.hpp"
#include "support.hpp"

using namespace oscmon;
using namespace oscmon::service;
namespace fs = std::filesystem;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = boost::asio::ip::tcp;

namespace {

Dataset mode_dataset(int channels, int with_mode, double seconds, std::uint64_t seed) {
  synth::SynthSpec spec;
  spec.duration = seconds;
  spec.start_time = 1700000000000;
  for (int c = 0; c < channels; ++c) {
    std::vector<Mode> m;
    if (c < with_mode) m.push_back(Mode::from_hz(1.0, 0.0, 1.0, 0.4 * c));
    spec.channel_modes.push_back(m);
  }
  auto d = synth::generate(spec);
  for (std::size_t c = 0; c < d.channel_count(); ++c) synth::add_white_noise(d.channels[c], 0.3, seed + c);
  return d;
}

std::vector<nlohmann::json> drain(Subscription& s) {
  std::vector<nlohmann::json> out;
  while (auto m = s.pop()) out.push_back(nlohmann::json::parse(*m));
  return out;
}

int count_type(const std::vector<nlohmann::json>& msgs, const std::string& type) {
  int n = 0;
  for (const auto& m : msgs) n += m.at("type") == type;
  return n;
}

void feed(LiveRunner& runner, const Dataset& d, std::size_t from, std::size_t to) {
  std::vector<double> row(d.channel_count());
  for (std::size_t k = from; k < to; ++k) {
    for (std::size_t c = 0; c < row.size(); ++c) row[c] = d.channels[c][k];
    runner.push(d.timestamp_of(k), row);
  }
}

fs::path temp_log(const std::string& name) {
  auto dir = fs::temp_directory_path() / "oscmon_test_service";
  fs::create_directories(dir);
  fs::remove(dir / name);
  return dir / name;
}

struct HttpReply {
  unsigned status;
  nlohmann::json body;
};

HttpReply request(unsigned short port, http::verb verb, const std::string& target,
                  const std::string& body = {}) {
  boost::asio::io_context ioc;
  tcp::resolver resolver(ioc);
  beast::tcp_stream stream(ioc);
  stream.connect(resolver.resolve("127.0.0.1", std::to_string(port)));
  http::request<http::string_body> req{verb, target, 11};
  req.set(http::field::host, "127.0.0.1");
  if (!body.empty()) {
    req.set(http::field::content_type, "application/json");
    req.body() = body;
    req.prepare_payload();
  }
  http::write(stream, req);
  beast::flat_buffer buf;
  http::response<http::string_body> res;
  http::read(stream, buf, res);
  beast::error_code ec;
  stream.socket().shutdown(tcp::socket::shutdown_both, ec);
  HttpReply r{res.result_int(), nullptr};
  if (!res.body().empty()) r.body = nlohmann::json::parse(res.body());
  return r;
}

}  // namespace

TEST_SUITE("service") {

TEST_CASE("config updates wait for the stride boundary") {
  ConfigManager m;
  CHECK(m.active()->version == 1);
  CHECK(m.pending() == nullptr);

  auto r = m.put({{"damping_ratio_alarm", 0.1}});
  CHECK(r.accepted);
  CHECK(r.pending->version == 2);
  CHECK(m.active()->config.damping_ratio_alarm == DetectorConfig{}.damping_ratio_alarm);

  // A second update stacks on the pending one.
  r = m.put({{"ts_filter_depth", 3}});
  CHECK(r.accepted);
  CHECK(r.pending->version == 3);
  CHECK(r.pending->config.damping_ratio_alarm == 0.1);
  CHECK(r.pending->config.ts_filter_depth == 3);

  // Rejected updates change nothing.
  r = m.put({{"freq_band", {2.0, 1.0}}});
  CHECK_FALSE(r.accepted);
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].field == "freq_band");
  CHECK(m.pending()->version == 3);

  const auto s = m.begin_stride();
  CHECK(s->version == 3);
  CHECK(s->hash == config_hash(s->config));
  CHECK(m.pending() == nullptr);
  CHECK(m.begin_stride()->version == 3);
  const auto j = m.to_json();
  CHECK(j.at("active").at("version") == 3);
  CHECK(j.at("pending").is_null());
  CHECK(m.put({{"sensitivity", 0.04}}).pending->version == 4);

  DetectorConfig bad;
  bad.sensitivity = -1.0;
  CHECK_THROWS_AS(ConfigManager{bad}, Error);
}

TEST_CASE("subscription drops oldest and reports the gap") {
  Subscription s(3);
  int notified = 0;
  s.set_notify([&] { ++notified; });
  for (int i = 1; i <= 5; ++i) s.push(std::to_string(i));
  CHECK(notified == 5);
  CHECK(s.dropped_total() == 2);
  CHECK(s.size() == 4);
  const auto gap = nlohmann::json::parse(*s.pop());
  CHECK(gap.at("type") == "gap");
  CHECK(gap.at("missed") == 2);
  CHECK(*s.pop() == "3");
  CHECK(*s.pop() == "4");
  CHECK(*s.pop() == "5");
  CHECK_FALSE(s.pop().has_value());

  // Queue sizes and gap counts under random traffic.
  testing::Gen g(121);
  for (int trial = 0; trial < 100; ++trial) {
    const auto cap = static_cast<std::size_t>(g.integer(1, 8));
    Subscription q(cap);
    std::uint64_t pushed = 0, delivered = 0, missed = 0;
    for (int step = 0; step < 200; ++step) {
      if (g.coin()) {
        q.push("m");
        ++pushed;
      } else if (auto m = q.pop()) {
        if (*m == "m") {
          ++delivered;
        } else {
          missed += nlohmann::json::parse(*m).at("missed").get<std::uint64_t>();
        }
      }
      CHECK(q.size() <= cap + 1);
    }
    while (auto m = q.pop()) {
      if (*m == "m") {
        ++delivered;
      } else {
        missed += nlohmann::json::parse(*m).at("missed").get<std::uint64_t>();
      }
    }
    CHECK(delivered + missed == pushed);
    CHECK(missed == q.dropped_total());
  }
}

TEST_CASE("hub fans out to every subscriber") {
  EventHub hub(16);
  auto a = hub.subscribe();
  auto b = hub.subscribe();
  CHECK(hub.subscriber_count() == 2);
  hub.publish("x");
  hub.unsubscribe(a);
  hub.publish("y");
  CHECK(a->size() == 1);
  CHECK(b->size() == 2);
  CHECK(hub.subscriber_count() == 1);
}

TEST_CASE("live runner publishes one event for a persistent mode") {
  const auto path = temp_log("live.ndjson");
  ServiceContext ctx(DetectorConfig{}, std::make_unique<events::EventStore>(path, true), 10000);
  auto s1 = ctx.hub.subscribe();
  auto s2 = ctx.hub.subscribe();
  const auto d = mode_dataset(4, 4, 15.0, 1);
  pipeline::EngineOptions opts;
  opts.threads = 1;
  LiveRunner runner(ctx, d.channel_ids, d.sample_rate, opts);
  feed(runner, d, 0, d.sample_count());
  CHECK(runner.strides() == 11);

  const auto m1 = drain(*s1);
  const auto m2 = drain(*s2);
  CHECK(m1 == m2);
  CHECK(count_type(m1, "status") == 11);
  REQUIRE(count_type(m1, "event") == 1);
  // The event arrives with the second stride, before its status message.
  CHECK(m1[0].at("type") == "status");
  CHECK(m1[1].at("type") == "event");
  CHECK(m1[2].at("stride") == 1);
  CHECK(m1[2].at("events") == 1);
  CHECK(m1[1].at("event").at("system_modes").size() == 1);
  CHECK(ctx.store->read_all().size() == 1);
  CHECK(ctx.status_json().at("strides") == 11);

  // A new runner on the same log continues the id sequence.
  LiveRunner again(ctx, d.channel_ids, d.sample_rate, opts);
  feed(again, d, 0, 240);
  const auto evs = ctx.store->read_all();
  REQUIRE(evs.size() == 2);
  CHECK(evs[1].event_id == 2);
}

TEST_CASE("live runner on ambient noise only reports status") {
  ServiceContext ctx(DetectorConfig{}, nullptr, 10000);
  auto sub = ctx.hub.subscribe();
  const auto d = mode_dataset(6, 0, 12.0, 2);
  LiveRunner runner(ctx, d.channel_ids, d.sample_rate);
  feed(runner, d, 0, d.sample_count());
  const auto msgs = drain(*sub);
  CHECK(count_type(msgs, "event") == 0);
  CHECK(count_type(msgs, "status") == 8);
  for (const auto& m : msgs) CHECK(m.at("quality").at("ok") == 6);
}

TEST_CASE("config change applies from the next stride") {
  ServiceContext ctx(DetectorConfig{}, nullptr, 10000);
  auto sub = ctx.hub.subscribe();
  const auto d = mode_dataset(3, 0, 12.0, 3);
  LiveRunner runner(ctx, d.channel_ids, d.sample_rate);
  feed(runner, d, 0, 160);  // stride 0 done at row 150, stride 1 not yet
  CHECK(runner.strides() == 1);
  REQUIRE(ctx.config.put({{"stride_seconds", 2.0}}).accepted);
  feed(runner, d, 160, d.sample_count());
  const auto msgs = drain(*sub);
  REQUIRE(msgs.size() >= 3);
  CHECK(msgs[0].at("config_version") == 1);
  for (std::size_t i = 1; i < msgs.size(); ++i) {
    CHECK(msgs[i].at("config_version") == 2);
    // Two-second stride from here on.
    CHECK(msgs[i].at("window_start").get<std::int64_t>() -
              msgs[i - 1].at("window_start").get<std::int64_t>() ==
          2000);
  }
}

TEST_CASE("replay and follow drive the runner") {
  const auto d = mode_dataset(3, 3, 10.0, 4);
  {
    ServiceContext ctx;
    std::atomic<bool> stop{false};
    CHECK(replay_dataset(ctx, d, 0.0, stop) == 6);
    CHECK(ctx.status_json().at("source_done") == true);
  }
  {
    // Follow a file with a missing row; a partial final line is not consumed.
    const auto path = temp_log("follow.csv");
    auto gappy = d;
    std::ostringstream os;
    write_csv(gappy, os);
    std::string text = os.str();
    // Drop the row for sample 100.
    std::size_t pos = 0;
    for (int line = 0; line < 101; ++line) pos = text.find('\n', pos) + 1;
    const auto end = text.find('\n', pos) + 1;
    text.erase(pos, end - pos);
    {
      std::ofstream out(path);
      out << text << "1700000099999,1";
    }
    ServiceContext ctx(DetectorConfig{}, nullptr, 10000);
    auto sub = ctx.hub.subscribe();
    std::atomic<bool> stop{false};
    std::thread t([&] { follow_csv(ctx, path, stop, {}, 10); });
    for (int i = 0; i < 500 && ctx.status_json().at("strides") != 6; ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    stop = true;
    t.join();
    const auto msgs = drain(*sub);
    REQUIRE(count_type(msgs, "status") == 6);
    int gapped = 0;
    for (const auto& m : msgs)
      if (m.at("type") == "status") gapped += m.at("quality").at("gapped").get<int>() > 0;
    CHECK(gapped == 4);  // windows starting at 0..3 s cover sample 100 (3.33 s)
  }
}

TEST_CASE("http and websocket api") {
  const auto log = temp_log("server.ndjson");
  ServiceContext ctx(DetectorConfig{}, std::make_unique<events::EventStore>(log, true), 10000);
  Server server(ctx, {"127.0.0.1", 0, 1});
  server.start();
  const auto port = server.port();
  REQUIRE(port != 0);

  auto r = request(port, http::verb::get, "/api/config");
  CHECK(r.status == 200);
  CHECK(r.body.at("active").at("version") == 1);
  CHECK(r.body.at("pending").is_null());

  r = request(port, http::verb::put, "/api/config", R"({"freq_band": [3, 1]})");
  CHECK(r.status == 422);
  CHECK(r.body.at("errors").at(0).at("field") == "freq_band");
  CHECK(r.body.at("pending").is_null());

  r = request(port, http::verb::put, "/api/config", "{oops");
  CHECK(r.status == 400);

  r = request(port, http::verb::put, "/api/config", R"({"damping_ratio_alarm": 0.08})");
  CHECK(r.status == 200);
  CHECK(r.body.at("pending").at("version") == 2);
  CHECK(r.body.at("pending").at("config").at("damping_ratio_alarm") == 0.08);

  CHECK(request(port, http::verb::get, "/api/history?from=5&to=1").status == 400);
  CHECK(request(port, http::verb::get, "/api/history?from=abc").status == 400);
  CHECK(request(port, http::verb::get, "/api/nope").status == 404);
  CHECK(request(port, http::verb::options, "/api/config").status == 204);

  // Live stream over a websocket while a replay runs.
  boost::asio::io_context ioc;
  tcp::resolver resolver(ioc);
  websocket::stream<tcp::socket> ws(ioc);
  boost::asio::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
  ws.handshake("127.0.0.1", "/api/stream");
  ws.write(boost::asio::buffer(std::string(R"({"type":"ping"})")));
  beast::flat_buffer buf;
  ws.read(buf);
  CHECK(nlohmann::json::parse(beast::buffers_to_string(buf.data())).at("type") == "pong");
  buf.clear();

  for (int i = 0; i < 100 && ctx.hub.subscriber_count() == 0; ++i)
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  REQUIRE(ctx.hub.subscriber_count() == 1);

  const auto d = mode_dataset(4, 4, 10.0, 5);
  std::atomic<bool> stop{false};
  replay_dataset(ctx, d, 0.0, stop);

  int statuses = 0, evs = 0;
  std::int64_t last_version = 0;
  while (statuses < 6) {
    ws.read(buf);
    const auto m = nlohmann::json::parse(beast::buffers_to_string(buf.data()));
    buf.clear();
    if (m.at("type") == "status") {
      ++statuses;
      last_version = m.at("config_version");
    }
    if (m.at("type") == "event") ++evs;
  }
  CHECK(evs == 1);
  CHECK(last_version == 2);
  ws.close(websocket::close_code::normal);

  r = request(port, http::verb::get, "/api/history?from=0&to=9999999999999");
  CHECK(r.status == 200);
  CHECK(r.body.at("events").size() == 1);
  CHECK(r.body.at("warnings").empty());
  r = request(port, http::verb::get, "/api/history?from=0&to=1");
  CHECK(r.body.at("events").empty());

  r = request(port, http::verb::get, "/api/status");
  CHECK(r.status == 200);
  CHECK(r.body.at("strides") == 6);
  CHECK(r.body.at("source_done") == true);
  CHECK(r.body.at("channels").size() == 4);

  r = request(port, http::verb::get, "/api/config");
  CHECK(r.body.at("active").at("version") == 2);

  server.stop();
}

}  // TEST_SUITE
