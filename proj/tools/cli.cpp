#include "cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <ctime>
#include <iomanip>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "oscmon/config_io.hpp"
#include "oscmon/dataset.hpp"
#include "oscmon/pipeline.hpp"
#include "oscmon/service.hpp"
#include "oscmon/synth.hpp"

namespace oscmon::cli {
namespace {

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

DetectorConfig load_config(const std::string& path) {
  return path.empty() ? DetectorConfig{} : load_kv(path);
}

int cmd_synth(const std::string& case_id, const std::string& out_path, std::uint64_t seed,
              std::optional<std::size_t> channels, std::optional<double> duration,
              std::ostream& out) {
  synth::CaseOptions opts;
  opts.seed = seed;
  opts.channels = channels;
  opts.duration = duration;
  const auto bc = synth::make_benchmark_case(case_id, opts);
  write_csv(bc.data, out_path);
  out << "wrote " << out_path << ": " << bc.data.channel_count() << " channels, "
      << bc.data.sample_count() << " samples at " << bc.data.sample_rate << " Hz\n";
  for (const auto& t : bc.truth) {
    out << "  mode " << std::fixed << std::setprecision(4) << t.frequency_hz << " Hz on "
        << t.channels.size() << " channels\n";
  }
  out.unsetf(std::ios::floatfield);
  return 0;
}

int cmd_detect(const std::string& input, const std::string& config_path,
               const std::string& events_path, int threads, std::ostream& out) {
  const auto config = load_config(config_path);
  const auto data = ingest_csv(input);
  pipeline::EngineOptions opts;
  opts.threads = threads;
  const auto res = pipeline::run(data, config, opts);
  events::EventStore store(events_path, /*truncate=*/true);
  for (const auto& e : res.events) store.append(e);
  out << event_table(res.events);
  out << res.events.size() << " event(s); log written to " << events_path << "\n";
  return 0;
}

int cmd_bench(const std::string& input, const std::string& strategy, const std::string& config_path,
              int threads, std::ostream& out) {
  const auto config = load_config(config_path);
  const auto data = ingest_csv(input);
  const auto s = pipeline::parse_strategy(strategy);
  const auto res = pipeline::bench(data, s, config, threads);
  const auto& c = res.counters;
  const auto crosscheck_total = 3 * c.n_total();
  const int workers = threads >= 0 ? threads : config.threads;
  out << std::left;
  auto row = [&out](const std::string& k) -> std::ostream& { return out << std::setw(20) << k; };
  row("strategy") << pipeline::to_string(s) << "\n";
  row("channels N_PMU") << c.channels << "\n";
  row("stride t (s)") << c.stride_seconds << "\n";
  row("monitored T (s)") << c.monitored_seconds() << "\n";
  row("strides") << c.strides << "\n";
  row("N_total") << c.n_total() << "  (N_PMU * T / t)\n";
  row("windows ok/all") << c.ok_windows << "/" << c.windows << "\n";
  row("prony calls") << c.prony_calls << "\n";
  row("htls calls") << c.htls_calls << "\n";
  row("ekf calls") << c.ekf_calls << "\n";
  row("total calls") << c.total_calls() << "\n";
  row("crosscheck total") << crosscheck_total << "  (3 * N_total)\n";
  if (crosscheck_total > 0) {
    row("reduction") << std::fixed << std::setprecision(1)
                     << 100.0 * (1.0 - static_cast<double>(c.total_calls()) /
                                           static_cast<double>(crosscheck_total))
                     << "%\n";
    row("prony approvals") << c.prony_approvals << " (" << 100.0 * c.prony_fp_rate() << "%)\n";
    row("stride wall") << std::setprecision(2) << "mean " << 1e3 * c.mean_stride_wall() << " ms, max "
                       << 1e3 * c.max_stride_wall() << " ms\n";
    out.unsetf(std::ios::floatfield);
  }
  row("events") << res.events.size() << "\n";
  row("threads") << (workers == 0 ? std::thread::hardware_concurrency() : static_cast<unsigned>(workers))
                 << " (hardware " << std::thread::hardware_concurrency() << ")\n";
  return 0;
}

int cmd_serve(const std::string& input, const std::string& follow, unsigned short port,
              double speed, const std::string& config_path, const std::string& events_path,
              const std::string& address, int threads, bool exit_when_done, std::ostream& out,
              std::ostream& err) {
  service::ServiceContext ctx(load_config(config_path),
                              std::make_unique<events::EventStore>(events_path, true));
  service::Server server(ctx, {address, port, 1});
  server.start();
  out << "listening on " << address << ":" << server.port() << "  (events log " << events_path
      << ")" << std::endl;

  g_stop.store(false);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  pipeline::EngineOptions opts;
  opts.threads = threads;
  int status = 0;
  try {
    if (!input.empty()) {
      const auto data = ingest_csv(input);
      const auto strides = service::replay_dataset(ctx, data, speed, g_stop, opts);
      out << "replay finished after " << strides << " strides" << std::endl;
    } else {
      service::follow_csv(ctx, follow, g_stop, opts);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    status = 1;
    g_stop.store(true);
  }
  while (!exit_when_done && !g_stop.load()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
  // Let subscribers drain the final messages.
  std::this_thread::sleep_for(std::chrono::milliseconds(200));
  server.stop();
  return status;
}

}  // namespace

std::string format_time(std::int64_t ms) {
  const std::int64_t secs = ms >= 0 ? ms / 1000 : -((-ms + 999) / 1000);
  const auto frac = static_cast<int>(ms - secs * 1000);
  const std::time_t t = static_cast<std::time_t>(secs);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%d %H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << frac;
  return os.str();
}

std::string event_table(const std::vector<events::OscillationEvent>& evs) {
  std::ostringstream os;
  os << std::left << std::setw(25) << "Time" << std::setw(11) << "Type" << std::setw(16)
     << "Frequency(Hz)" << "Channels\n";
  for (const auto& e : evs) {
    for (const auto& m : e.system_modes) {
      std::string type = m.classification == cluster::Classification::Local ? "Local" : "Inter-area";
      std::string ids;
      for (const auto& [id, mode] : m.members) ids += (ids.empty() ? "" : " ") + id;
      std::ostringstream f;
      f << std::fixed << std::setprecision(2) << m.frequency_hz;
      os << std::setw(25) << format_time(e.detected_at) << std::setw(11) << type << std::setw(16)
         << f.str() << m.members.size() << ": " << ids << "\n";
    }
  }
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Low-frequency oscillation detection over multi-channel measurement streams"};
  app.require_subcommand(1);

  std::string case_id, out_path;
  std::uint64_t seed = 1;
  std::optional<std::size_t> channels;
  std::optional<double> duration;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic benchmark dataset as CSV");
  synth_cmd->add_option("--case", case_id, "local_1p4 | interarea_0p37 | ambient | mixed")->required();
  synth_cmd->add_option("--out", out_path, "output CSV")->required();
  synth_cmd->add_option("--seed", seed, "noise seed");
  synth_cmd->add_option("--channels", channels, "total channel count");
  synth_cmd->add_option("--duration", duration, "seconds");

  std::string input, config_path, events_path = "events.ndjson", strategy;
  int threads = -1;
  auto* detect_cmd = app.add_subcommand("detect", "run detection over a recorded CSV");
  detect_cmd->add_option("--input", input, "input CSV")->required();
  detect_cmd->add_option("--config", config_path, "key = value config file");
  detect_cmd->add_option("--events", events_path, "event log to (over)write")->capture_default_str();
  detect_cmd->add_option("--threads", threads, "worker threads, 0 = all cores");

  auto* bench_cmd = app.add_subcommand("bench", "count detector invocations for one strategy");
  bench_cmd->add_option("--input", input, "input CSV")->required();
  bench_cmd->add_option("--strategy", strategy, "voting | crosscheck")
      ->required()
      ->check(CLI::IsMember({"voting", "crosscheck"}));
  bench_cmd->add_option("--config", config_path, "key = value config file");
  bench_cmd->add_option("--threads", threads, "worker threads, 0 = all cores");

  std::string follow, address = "0.0.0.0";
  unsigned short port = 8080;
  double speed = 1.0;
  bool exit_when_done = false;
  auto* serve_cmd = app.add_subcommand("serve", "replay or follow a CSV behind the HTTP/WebSocket API");
  auto* in_opt = serve_cmd->add_option("--input", input, "recorded CSV to replay");
  auto* follow_opt = serve_cmd->add_option("--follow", follow, "CSV still being appended to");
  in_opt->excludes(follow_opt);
  serve_cmd->add_option("--port", port, "listen port, 0 = any free port")->capture_default_str();
  serve_cmd->add_option("--address", address, "listen address")->capture_default_str();
  serve_cmd->add_option("--speed", speed, "replay pace multiple of real time, 0 = unpaced")
      ->capture_default_str();
  serve_cmd->add_option("--config", config_path, "key = value config file");
  serve_cmd->add_option("--events", events_path, "event log to (over)write")->capture_default_str();
  serve_cmd->add_option("--threads", threads, "worker threads, 0 = all cores");
  serve_cmd->add_flag("--exit-when-done", exit_when_done, "stop once the replay finishes");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*synth_cmd) return cmd_synth(case_id, out_path, seed, channels, duration, out);
    if (*detect_cmd) return cmd_detect(input, config_path, events_path, threads, out);
    if (*bench_cmd) return cmd_bench(input, strategy, config_path, threads, out);
    if (*serve_cmd) {
      if (input.empty() == follow.empty()) {
        err << "serve: give exactly one of --input or --follow\n";
        return 2;
      }
      return cmd_serve(input, follow, port, speed, config_path, events_path, address, threads,
                       exit_when_done, out, err);
    }
  } catch (const Error& e) {
    err << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace oscmon::cli
