#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "oscmon/core.hpp"

namespace oscmon {

/// Flat `key = value` text, one field per line, `#` comments. freq_band is
/// written as `f_min, f_max`.
std::string to_kv(const DetectorConfig& config);

/// Applies every key in `text` on top of `base`. Unknown keys and malformed
/// values throw Error(InvalidConfig); the merged config is validated too.
DetectorConfig parse_kv(const std::string& text, const DetectorConfig& base = {});
DetectorConfig load_kv(const std::filesystem::path& path, const DetectorConfig& base = {});

nlohmann::json to_json(const DetectorConfig& config);

/// Merges a partial JSON object onto `base`. Problems are reported per field
/// in `errors` (unknown keys, wrong types, failed invariants); when any are
/// present the returned config must not be used.
DetectorConfig merge_json(const DetectorConfig& base, const nlohmann::json& patch,
                          std::vector<FieldError>& errors);

/// FNV-1a 64 over the canonical key=value text, as 16 hex digits.
std::string config_hash(const DetectorConfig& config);

}  // namespace oscmon
