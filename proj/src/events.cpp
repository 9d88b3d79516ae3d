#include "oscmon/events.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include <fcntl.h>
#include <unistd.h>

namespace oscmon::events {
namespace {

nlohmann::json mode_json(const Mode& m) {
  return {{"amplitude", m.amplitude},
          {"damping_factor", m.damping_factor},
          {"angular_frequency", m.angular_frequency},
          {"phase", m.phase}};
}

Mode mode_from(const nlohmann::json& j) {
  return Mode{j.at("amplitude").get<double>(), j.at("damping_factor").get<double>(),
              j.at("angular_frequency").get<double>(), j.at("phase").get<double>()};
}

cluster::Classification classification_from(const std::string& s) {
  if (s == "local") return cluster::Classification::Local;
  if (s == "inter_area") return cluster::Classification::InterArea;
  throw Error(ErrorKind::Parse, "unknown classification '" + s + "'");
}

// Like json::dump() but floats carry 17 significant digits, trailing zeros
// kept, so every number in the log reads back bit-exact.
void dump_fixed(const nlohmann::json& j, std::string& out) {
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) out += ',';
        first = false;
        out += nlohmann::json(k).dump();
        out += ':';
        dump_fixed(v, out);
      }
      out += '}';
      break;
    }
    case nlohmann::json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        dump_fixed(j[i], out);
      }
      out += ']';
      break;
    }
    case nlohmann::json::value_t::number_float: {
      const double x = j.get<double>();
      if (!std::isfinite(x)) {
        out += "null";
        break;
      }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%#.17g", x);
      out += buf;
      break;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

nlohmann::json to_json(const cluster::SystemMode& mode) {
  nlohmann::json members = nlohmann::json::object();
  for (const auto& [id, m] : mode.members) members[id] = mode_json(m);
  nlohmann::json shape = nlohmann::json::object();
  for (const auto& [id, e] : mode.mode_shape) {
    shape[id] = {{"amplitude", e.amplitude}, {"phase", e.phase}};
  }
  return {{"frequency_hz", mode.frequency_hz},
          {"damping_ratio", mode.damping_ratio()},
          {"classification", cluster::to_string(mode.classification)},
          {"members", std::move(members)},
          {"mode_shape", std::move(shape)}};
}

cluster::SystemMode system_mode_from_json(const nlohmann::json& j) {
  cluster::SystemMode m;
  m.frequency_hz = j.at("frequency_hz").get<double>();
  m.classification = classification_from(j.at("classification").get<std::string>());
  for (const auto& [id, v] : j.at("members").items()) m.members.emplace(id, mode_from(v));
  for (const auto& [id, v] : j.at("mode_shape").items()) {
    m.mode_shape.emplace(id, cluster::ShapeEntry{v.at("amplitude").get<double>(),
                                                 v.at("phase").get<double>()});
  }
  return m;
}

nlohmann::json to_json(const OscillationEvent& event) {
  nlohmann::json modes = nlohmann::json::array();
  for (const auto& m : event.system_modes) modes.push_back(to_json(m));
  return {{"event_id", event.event_id},
          {"detected_at", event.detected_at},
          {"system_modes", std::move(modes)},
          {"detectors_run", event.detectors_run},
          {"config_hash", event.config_hash}};
}

OscillationEvent event_from_json(const nlohmann::json& j) {
  OscillationEvent e;
  e.event_id = j.at("event_id").get<std::int64_t>();
  e.detected_at = j.at("detected_at").get<std::int64_t>();
  for (const auto& m : j.at("system_modes")) e.system_modes.push_back(system_mode_from_json(m));
  e.detectors_run = j.at("detectors_run").get<std::map<std::string, int>>();
  e.config_hash = j.at("config_hash").get<std::string>();
  return e;
}

std::string serialize(const OscillationEvent& event) {
  std::string out;
  dump_fixed(to_json(event), out);
  return out;
}

OscillationEvent parse_line(const std::string& line) {
  try {
    return event_from_json(nlohmann::json::parse(line));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("event record: ") + e.what());
  }
}

EventStore::EventStore(std::filesystem::path path, bool truncate) : path_(std::move(path)) {
  if (truncate) {
    std::ofstream out(path_, std::ios::trunc);
    if (!out) throw Error(ErrorKind::Storage, "cannot create event log " + path_.string());
    return;
  }
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  for (const auto& e : read_all()) last_id_ = std::max(last_id_, e.event_id);
  // Isolate a torn last line so the next record starts on its own line.
  if (!content.empty() && content.back() != '\n') write_line("");
}

void EventStore::write_line(const std::string& line) {
  const int fd = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT, 0644);
  if (fd < 0) {
    throw Error(ErrorKind::Storage, "open " + path_.string() + ": " + std::strerror(errno));
  }
  const std::string data = line + "\n";
  std::size_t done = 0;
  while (done < data.size()) {
    const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw Error(ErrorKind::Storage, "write " + path_.string() + ": " + std::strerror(err));
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const int err = errno;
    ::close(fd);
    throw Error(ErrorKind::Storage, "fsync " + path_.string() + ": " + std::strerror(err));
  }
  ::close(fd);
}

void EventStore::append(const OscillationEvent& event) {
  std::lock_guard lock(mu_);
  const std::int64_t newest = queue_.empty() ? last_id_ : queue_.back().event_id;
  if (event.event_id <= newest) {
    throw Error(ErrorKind::InvalidArgument,
                "event_id " + std::to_string(event.event_id) + " does not follow " +
                    std::to_string(newest));
  }
  queue_.push_back(event);
  while (!queue_.empty()) {
    write_line(serialize(queue_.front()));
    last_id_ = queue_.front().event_id;
    queue_.pop_front();
  }
}

std::size_t EventStore::flush_pending() {
  std::lock_guard lock(mu_);
  try {
    while (!queue_.empty()) {
      write_line(serialize(queue_.front()));
      last_id_ = queue_.front().event_id;
      queue_.pop_front();
    }
  } catch (const Error&) {
  }
  return queue_.size();
}

std::size_t EventStore::pending() const {
  std::lock_guard lock(mu_);
  return queue_.size();
}

std::int64_t EventStore::last_event_id() const {
  std::lock_guard lock(mu_);
  return queue_.empty() ? last_id_ : queue_.back().event_id;
}

std::vector<OscillationEvent> EventStore::read_range(std::int64_t from, std::int64_t to,
                                                     std::vector<std::string>* warnings) const {
  std::vector<OscillationEvent> out;
  std::ifstream in(path_);
  if (!in) return out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto e = parse_line(line);
      if (e.detected_at >= from && e.detected_at <= to) out.push_back(std::move(e));
    } catch (const Error& err) {
      if (warnings) {
        warnings->push_back(path_.string() + ":" + std::to_string(line_no) +
                            ": skipped unreadable record (" + err.what() + ")");
      }
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.detected_at < b.detected_at;
  });
  return out;
}

std::vector<OscillationEvent> EventStore::read_all(std::vector<std::string>* warnings) const {
  return read_range(std::numeric_limits<std::int64_t>::min(),
                    std::numeric_limits<std::int64_t>::max(), warnings);
}

}  // namespace oscmon::events
