#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace oscmon {

/// Aligned multi-channel recording at a uniform sample rate.
struct Dataset {
  std::vector<std::string> channel_ids;
  std::vector<std::vector<double>> channels;  // channels[c][k]
  double sample_rate = 0.0;
  std::int64_t start_time = 0;  // ms since epoch of sample 0
  // Rows that were missing from the source and were filled with NaN.
  std::vector<std::uint8_t> gap_rows;

  std::size_t channel_count() const { return channel_ids.size(); }
  std::size_t sample_count() const { return channels.empty() ? 0 : channels.front().size(); }
  double duration_seconds() const {
    return sample_rate > 0.0 ? static_cast<double>(sample_count()) / sample_rate : 0.0;
  }
  std::int64_t timestamp_of(std::size_t row) const;
};

/// Reads the `t_ms,<id>,...` CSV format. Unparseable cells become NaN;
/// structural problems throw Error(Parse) naming the offending line.
Dataset ingest_csv(const std::filesystem::path& path);
Dataset parse_csv(std::istream& in);

void write_csv(const Dataset& data, const std::filesystem::path& path);
void write_csv(const Dataset& data, std::ostream& out);

/// Incremental reader used when following a file that is still being written.
class CsvRowReader {
 public:
  struct Row {
    std::int64_t t_ms = 0;
    std::vector<double> values;
  };

  /// Consumes the header line. Throws Error(Parse) if malformed.
  explicit CsvRowReader(const std::string& header_line);

  const std::vector<std::string>& channel_ids() const { return ids_; }
  /// Parses one data line; `line_no` is used in diagnostics.
  Row parse(const std::string& line, std::size_t line_no);

 private:
  std::vector<std::string> ids_;
  bool have_last_ = false;
  std::int64_t last_t_ = 0;
};

}  // namespace oscmon
