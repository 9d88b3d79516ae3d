#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "oscmon/events.hpp"

namespace oscmon::cli {

/// Runs one command line (args excludes the program name). Returns the
/// process exit status.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// One row per system mode: time, type, frequency, channels.
std::string event_table(const std::vector<events::OscillationEvent>& events);

/// UTC "YYYY-MM-DD HH:MM:SS.mmm".
std::string format_time(std::int64_t ms);

}  // namespace oscmon::cli
