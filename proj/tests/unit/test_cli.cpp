#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "oscmon/dataset.hpp"
#include "support.hpp"

using namespace oscmon;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int status;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int status = cli::run(args, out, err);
  return {status, out.str(), err.str()};
}

fs::path work_dir() {
  auto d = fs::temp_directory_path() / "oscmon_test_cli";
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string value_of(const std::string& text, const std::string& key) {
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind(key, 0) == 0) {
      std::istringstream rest(line.substr(key.size()));
      std::string v;
      rest >> v;
      return v;
    }
  }
  return {};
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("format helpers") {
  CHECK(cli::format_time(0) == "1970-01-01 00:00:00.000");
  CHECK(cli::format_time(1700000000123) == "2023-11-14 22:13:20.123");
  CHECK(cli::format_time(-1) == "1969-12-31 23:59:59.999");
  CHECK(cli::event_table({}).find("Frequency(Hz)") != std::string::npos);
}

TEST_CASE("synth then detect") {
  const auto dir = work_dir();
  const auto csv = (dir / "local.csv").string();
  auto r = run_cli({"synth", "--case", "local_1p4", "--out", csv});
  REQUIRE(r.status == 0);
  CHECK(r.out.find("1.4") != std::string::npos);

  const auto log1 = (dir / "a.ndjson").string(), log2 = (dir / "b.ndjson").string();
  r = run_cli({"detect", "--input", csv, "--events", log1});
  REQUIRE(r.status == 0);
  CHECK(r.out.find("Local") != std::string::npos);
  CHECK(r.out.find("1.40") != std::string::npos);
  CHECK(r.out.find("1 event(s)") != std::string::npos);
  REQUIRE(run_cli({"detect", "--input", csv, "--events", log2, "--threads", "2"}).status == 0);
  CHECK(slurp(log1) == slurp(log2));
  CHECK(!slurp(log1).empty());

  // Detect truncates the log it is given.
  REQUIRE(run_cli({"detect", "--input", csv, "--events", log1}).status == 0);
  CHECK(slurp(log1) == slurp(log2));
}

TEST_CASE("config file is honoured") {
  const auto dir = work_dir();
  const auto csv = (dir / "local_cfg.csv").string();
  REQUIRE(run_cli({"synth", "--case", "local_1p4", "--out", csv, "--duration", "20"}).status == 0);
  const auto cfg = dir / "high.conf";
  {
    std::ofstream out(cfg);
    out << "amplitude_threshold = 50\n";
  }
  auto r = run_cli({"detect", "--input", csv, "--config", cfg.string(), "--events", (dir / "c.ndjson").string()});
  CHECK(r.status == 0);
  CHECK(r.out.find("0 event(s)") != std::string::npos);

  {
    std::ofstream out(cfg);
    out << "no_such_key = 1\n";
  }
  r = run_cli({"detect", "--input", csv, "--config", cfg.string(), "--events", (dir / "c.ndjson").string()});
  CHECK(r.status == 1);
  CHECK(r.err.find("invalid-config") != std::string::npos);
}

TEST_CASE("header-only input gives no events") {
  const auto dir = work_dir();
  const auto csv = dir / "empty.csv";
  {
    std::ofstream out(csv);
    out << "t_ms,a,b\n";
  }
  const auto r = run_cli({"detect", "--input", csv.string(), "--events", (dir / "e.ndjson").string()});
  CHECK(r.status == 0);
  CHECK(r.out.find("0 event(s)") != std::string::npos);
}

TEST_CASE("bad arguments fail") {
  CHECK(run_cli({}).status != 0);
  CHECK(run_cli({"frobnicate"}).status != 0);
  CHECK(run_cli({"synth", "--case", "local_1p4"}).status != 0);
  CHECK(run_cli({"synth", "--case", "nope", "--out", (work_dir() / "x.csv").string()}).status == 1);
  CHECK(run_cli({"detect", "--input", "/nonexistent.csv"}).status == 1);
  CHECK(run_cli({"bench", "--input", "x.csv", "--strategy", "majority"}).status != 0);
  CHECK(run_cli({"serve"}).status != 0);
}

TEST_CASE("bench counts invocations") {
  const auto dir = work_dir();
  const auto csv = (dir / "ambient.csv").string();
  REQUIRE(run_cli({"synth", "--case", "ambient", "--out", csv, "--channels", "12", "--duration", "20"}).status == 0);
  const auto x = run_cli({"bench", "--input", csv, "--strategy", "crosscheck"});
  REQUIRE(x.status == 0);
  CHECK(value_of(x.out, "strides") == "16");
  CHECK(value_of(x.out, "N_total") == "192");
  CHECK(value_of(x.out, "prony calls") == "192");
  CHECK(value_of(x.out, "htls calls") == "192");
  CHECK(value_of(x.out, "ekf calls") == "192");
  CHECK(value_of(x.out, "total calls") == "576");

  const auto v = run_cli({"bench", "--input", csv, "--strategy", "voting"});
  REQUIRE(v.status == 0);
  CHECK(value_of(v.out, "prony calls") == "192");
  CHECK(std::stoi(value_of(v.out, "total calls")) < 576);
  CHECK(value_of(v.out, "events") == "0");
}

}  // TEST_SUITE
