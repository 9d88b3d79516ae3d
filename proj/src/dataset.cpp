#include "oscmon/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "oscmon/core.hpp"

namespace oscmon {
namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Error parse_error(std::size_t line_no, const std::string& msg) {
  return Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + msg);
}

double parse_value(const std::string& cell) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return v;
}

// Mean spacing of the regular (non-gap) deltas; snapped to an integer rate
// when within 1% of one, since PMU reporting rates are integral.
double infer_rate(const std::vector<std::int64_t>& t) {
  if (t.size() < 2) return 0.0;
  std::int64_t dmin = std::numeric_limits<std::int64_t>::max();
  for (std::size_t i = 1; i < t.size(); ++i) dmin = std::min(dmin, t[i] - t[i - 1]);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 1; i < t.size(); ++i) {
    const auto d = t[i] - t[i - 1];
    if (static_cast<double>(d) <= 1.5 * static_cast<double>(dmin)) {
      sum += static_cast<double>(d);
      ++n;
    }
  }
  const double fs = 1000.0 / (sum / static_cast<double>(n));
  const double r = std::round(fs);
  return std::abs(fs - r) <= 0.01 * r ? r : fs;
}

}  // namespace

std::int64_t Dataset::timestamp_of(std::size_t row) const {
  return start_time + std::llround(static_cast<double>(row) * 1000.0 / sample_rate);
}

CsvRowReader::CsvRowReader(const std::string& header_line) {
  auto cells = split(trim(header_line));
  if (cells.empty() || cells.front() != "t_ms") {
    throw parse_error(1, "missing header (expected 't_ms,<channel>,...')");
  }
  ids_.assign(cells.begin() + 1, cells.end());
  for (const auto& id : ids_) {
    if (id.empty()) throw parse_error(1, "empty channel id in header");
  }
}

CsvRowReader::Row CsvRowReader::parse(const std::string& line, std::size_t line_no) {
  auto cells = split(trim(line));
  if (cells.size() != ids_.size() + 1) {
    throw parse_error(line_no, "expected " + std::to_string(ids_.size() + 1) +
                                   " columns, found " + std::to_string(cells.size()));
  }
  Row row;
  const auto& ts = cells.front();
  auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), row.t_ms);
  if (ec != std::errc() || ptr != ts.data() + ts.size()) {
    throw parse_error(line_no, "timestamp '" + ts + "' is not an integer");
  }
  if (have_last_ && row.t_ms <= last_t_) {
    throw parse_error(line_no, "timestamps must be strictly increasing");
  }
  have_last_ = true;
  last_t_ = row.t_ms;
  row.values.reserve(ids_.size());
  for (std::size_t c = 1; c < cells.size(); ++c) row.values.push_back(parse_value(cells[c]));
  return row;
}

Dataset parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw parse_error(1, "missing header");
  CsvRowReader reader(line);

  std::vector<std::int64_t> times;
  std::vector<std::size_t> line_numbers;
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto row = reader.parse(line, line_no);
    times.push_back(row.t_ms);
    line_numbers.push_back(line_no);
    rows.push_back(std::move(row.values));
  }

  Dataset ds;
  ds.channel_ids = reader.channel_ids();
  ds.channels.assign(ds.channel_ids.size(), {});
  if (times.empty()) return ds;
  ds.start_time = times.front();
  ds.sample_rate = infer_rate(times);
  if (times.size() == 1) {
    for (std::size_t c = 0; c < ds.channels.size(); ++c) ds.channels[c].push_back(rows[0][c]);
    ds.gap_rows.push_back(0);
    return ds;
  }

  const double period = 1000.0 / ds.sample_rate;
  std::int64_t prev_index = -1;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const double offset = static_cast<double>(times[r] - ds.start_time);
    const auto index = static_cast<std::int64_t>(std::llround(offset / period));
    if (std::abs(offset - static_cast<double>(index) * period) > 1.0 + 1e-9 ||
        index <= prev_index) {
      throw parse_error(line_numbers[r], "timestamp off the constant sampling period");
    }
    for (std::int64_t fill = prev_index + 1; fill < index; ++fill) {
      for (auto& ch : ds.channels) ch.push_back(std::numeric_limits<double>::quiet_NaN());
      ds.gap_rows.push_back(1);
    }
    for (std::size_t c = 0; c < ds.channels.size(); ++c) ds.channels[c].push_back(rows[r][c]);
    ds.gap_rows.push_back(0);
    prev_index = index;
  }
  return ds;
}

Dataset ingest_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Parse, "cannot open " + path.string());
  return parse_csv(in);
}

void write_csv(const Dataset& data, std::ostream& out) {
  out << "t_ms";
  for (const auto& id : data.channel_ids) out << ',' << id;
  out << '\n';
  char buf[32];
  for (std::size_t k = 0; k < data.sample_count(); ++k) {
    out << data.timestamp_of(k);
    for (const auto& ch : data.channels) {
      const double v = ch[k];
      if (std::isnan(v)) {
        out << ",nan";
      } else {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
      }
    }
    out << '\n';
  }
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Storage, "cannot write " + path.string());
  write_csv(data, out);
  if (!out) throw Error(ErrorKind::Storage, "write failed for " + path.string());
}

}  // namespace oscmon
