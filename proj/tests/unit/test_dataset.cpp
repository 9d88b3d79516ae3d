#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oscmon/dataset.hpp"
#include "oscmon/synth.hpp"

using namespace oscmon;

namespace {

std::string csv_rows(int channels, int rows, int period_ms = 40) {
  std::ostringstream os;
  os << "t_ms";
  for (int c = 0; c < channels; ++c) os << ",c" << c;
  os << "\n";
  for (int r = 0; r < rows; ++r) {
    os << 1000 + r * period_ms;
    for (int c = 0; c < channels; ++c) os << "," << (r * 0.5 + c);
    os << "\n";
  }
  return os.str();
}

Dataset parse(const std::string& s) {
  std::istringstream in(s);
  return parse_csv(in);
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("well-formed file") {
  const auto ds = parse(csv_rows(3, 150));
  CHECK(ds.channel_count() == 3);
  CHECK(ds.sample_count() == 150);
  CHECK(ds.sample_rate == doctest::Approx(25.0));
  CHECK(ds.start_time == 1000);
  CHECK(ds.channels[2][4] == 4 * 0.5 + 2);
  CHECK(ds.timestamp_of(10) == 1400);
}

TEST_CASE("nan cell") {
  auto text = csv_rows(2, 10);
  const auto pos = text.find("1080,");
  text.replace(pos, std::string("1080,1").size(), "1080,nan");
  const auto ds = parse(text);
  CHECK(std::isnan(ds.channels[0][2]));
  CHECK(ds.channels[1][2] == 2.0);
}

TEST_CASE("structural errors") {
  CHECK_THROWS_AS(parse(""), Error);
  CHECK_THROWS_AS(parse("time,a\n0,1\n"), Error);
  CHECK_THROWS_AS(parse("t_ms,a\n0,1\n0,2\n"), Error);         // duplicated timestamp
  CHECK_THROWS_AS(parse("t_ms,a\n0,1\n40,2\n30,3\n"), Error);  // going back
  CHECK_THROWS_AS(parse("t_ms,a,b\n0,1\n"), Error);            // short row
  CHECK_THROWS_AS(parse("t_ms,a\nx,1\n"), Error);
  try {
    parse("t_ms,a\n0,1\n40,2\n40,3\n");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Parse);
    CHECK(std::string(e.what()).find("4") != std::string::npos);
  }
}

TEST_CASE("header only") {
  const auto ds = parse("t_ms,a,b\n");
  CHECK(ds.channel_count() == 2);
  CHECK(ds.sample_count() == 0);
}

TEST_CASE("missing rows become gap rows") {
  const auto ds = parse("t_ms,a\n0,1\n40,2\n120,3\n160,4\n");
  REQUIRE(ds.sample_count() == 5);
  CHECK(ds.gap_rows == std::vector<std::uint8_t>{0, 0, 1, 0, 0});
  CHECK(std::isnan(ds.channels[0][2]));
}

TEST_CASE("write and read back") {
  synth::CaseOptions o;
  o.channels = 4;
  o.duration = 2.0;
  const auto bc = synth::make_benchmark_case("local_1p4", o);
  const auto path = std::filesystem::temp_directory_path() / "oscmon_dataset_rt.csv";
  write_csv(bc.data, path);
  const auto back = ingest_csv(path);
  CHECK(back.channel_ids == bc.data.channel_ids);
  CHECK(back.sample_rate == bc.data.sample_rate);
  REQUIRE(back.sample_count() == bc.data.sample_count());
  for (std::size_t c = 0; c < back.channel_count(); ++c) CHECK(back.channels[c] == bc.data.channels[c]);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(ingest_csv("/nonexistent/file.csv"), Error);
}

TEST_CASE("row reader") {
  CsvRowReader r("t_ms,x,y");
  CHECK(r.channel_ids() == std::vector<std::string>{"x", "y"});
  auto row = r.parse("10,1.5,nan", 2);
  CHECK(row.t_ms == 10);
  CHECK(row.values[0] == 1.5);
  CHECK(std::isnan(row.values[1]));
  CHECK_THROWS_AS(r.parse("10,1,2", 3), Error);
}

}  // TEST_SUITE
