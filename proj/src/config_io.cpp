#include "oscmon/config_io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace oscmon {
namespace {

struct Field {
  const char* name;
  bool integer;
  std::function<double(const DetectorConfig&)> get;
  std::function<void(DetectorConfig&, double)> set;
};

#define REAL_FIELD(f) \
  Field{#f, false, [](const DetectorConfig& c) { return c.f; }, [](DetectorConfig& c, double v) { c.f = v; }}
#define INT_FIELD(f)                                                         \
  Field{#f, true, [](const DetectorConfig& c) { return double(c.f); }, \
        [](DetectorConfig& c, double v) { c.f = static_cast<int>(v); }}

#define BOOL_FIELD(f)                                                        \
  Field{#f, true, [](const DetectorConfig& c) { return c.f ? 1.0 : 0.0; }, \
        [](DetectorConfig& c, double v) { c.f = v != 0.0; }}

// freq_band is handled separately; everything else is a scalar.
const std::vector<Field>& scalar_fields() {
  static const std::vector<Field> fields = {
      REAL_FIELD(sensitivity),
      REAL_FIELD(amplitude_threshold),
      REAL_FIELD(damping_ratio_alarm),
      INT_FIELD(ts_filter_depth),
      REAL_FIELD(window_seconds),
      REAL_FIELD(stride_seconds),
      REAL_FIELD(strong_damping_ratio_max),
      REAL_FIELD(min_mode_significance),
      INT_FIELD(prony_max_order),
      BOOL_FIELD(refit_residues),
      REAL_FIELD(htls_rank_tau),
      INT_FIELD(htls_max_modes),
      REAL_FIELD(trigger_factor),
      INT_FIELD(trigger_max_candidates),
      REAL_FIELD(ekf_q_oscillatory),
      REAL_FIELD(ekf_q_parameter),
      REAL_FIELD(ekf_r),
      REAL_FIELD(ekf_p0_amplitude),
      REAL_FIELD(ekf_p0_omega),
      REAL_FIELD(ekf_p0_sigma),
      INT_FIELD(ekf_refine_passes),
      REAL_FIELD(classification_boundary_hz),
      INT_FIELD(threads),
  };
  return fields;
}

#undef REAL_FIELD
#undef INT_FIELD
#undef BOOL_FIELD

const Field* find_field(const std::string& name) {
  for (const auto& f : scalar_fields()) {
    if (name == f.name) return &f;
  }
  return nullptr;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_number(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(t, &used);
  } catch (const std::exception&) {
    return false;
  }
  return used == t.size();
}

bool integral(double v) { return std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e9; }

void throw_if_invalid(const DetectorConfig& c) {
  const auto errs = c.validate();
  if (errs.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& e : errs) msg += " " + e.field + " (" + e.message + ")";
  throw Error(ErrorKind::InvalidConfig, msg);
}

}  // namespace

std::string to_kv(const DetectorConfig& config) {
  std::string out = "freq_band = " + fmt(config.freq_min) + ", " + fmt(config.freq_max) + "\n";
  for (const auto& f : scalar_fields()) {
    const double v = f.get(config);
    out += std::string(f.name) + " = " +
           (f.integer ? std::to_string(static_cast<long long>(v)) : fmt(v)) + "\n";
  }
  return out;
}

DetectorConfig parse_kv(const std::string& text, const DetectorConfig& base) {
  DetectorConfig c = base;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::InvalidConfig, "config line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "freq_band") {
      const auto comma = value.find(',');
      double lo = 0.0, hi = 0.0;
      if (comma == std::string::npos || !parse_number(value.substr(0, comma), lo) ||
          !parse_number(value.substr(comma + 1), hi)) {
        fail("freq_band needs two numbers 'f_min, f_max'");
      }
      c.freq_min = lo;
      c.freq_max = hi;
      continue;
    }
    const Field* f = find_field(key);
    if (!f) fail("unknown key '" + key + "'");
    double v = 0.0;
    if (!parse_number(value, v)) fail("'" + key + "' is not a number");
    if (f->integer && !integral(v)) fail("'" + key + "' must be an integer");
    f->set(c, v);
  }
  throw_if_invalid(c);
  return c;
}

DetectorConfig load_kv(const std::filesystem::path& path, const DetectorConfig& base) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::InvalidConfig, "cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_kv(ss.str(), base);
}

nlohmann::json to_json(const DetectorConfig& config) {
  nlohmann::json j;
  j["freq_band"] = {config.freq_min, config.freq_max};
  for (const auto& f : scalar_fields()) {
    const double v = f.get(config);
    if (f.integer) {
      j[f.name] = static_cast<long long>(v);
    } else {
      j[f.name] = v;
    }
  }
  return j;
}

DetectorConfig merge_json(const DetectorConfig& base, const nlohmann::json& patch,
                          std::vector<FieldError>& errors) {
  DetectorConfig c = base;
  if (!patch.is_object()) {
    errors.push_back({"", "config update must be a JSON object"});
    return c;
  }
  for (const auto& [key, value] : patch.items()) {
    if (key == "freq_band") {
      if (!value.is_array() || value.size() != 2 || !value[0].is_number() || !value[1].is_number()) {
        errors.push_back({key, "must be [f_min, f_max]"});
        continue;
      }
      c.freq_min = value[0].get<double>();
      c.freq_max = value[1].get<double>();
      continue;
    }
    const Field* f = find_field(key);
    if (!f) {
      errors.push_back({key, "unknown field"});
      continue;
    }
    if (!value.is_number()) {
      errors.push_back({key, "must be a number"});
      continue;
    }
    const double v = value.get<double>();
    if (f->integer && !integral(v)) {
      errors.push_back({key, "must be an integer"});
      continue;
    }
    f->set(c, v);
  }
  if (errors.empty()) {
    for (auto& e : c.validate()) errors.push_back(std::move(e));
  }
  return c;
}

std::string config_hash(const DetectorConfig& config) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : to_kv(config)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace oscmon
