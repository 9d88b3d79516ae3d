#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "oscmon/core.hpp"

namespace oscmon::ensemble {

using DetectorFn = std::function<DetectionResult(const ChannelWindow&, const DetectorConfig&)>;

/// The three voting members in voting order. Defaults to Prony, HTLS, EKF.
struct Detectors {
  DetectorFn first;
  DetectorFn second;
  DetectorFn third;

  static Detectors standard();
};

struct VoteTrace {
  Verdict a_verdict = Verdict::NoOscillation;
  std::optional<Verdict> b_verdict;
  std::optional<Verdict> c_verdict;
  Verdict final_verdict = Verdict::NoOscillation;
  std::vector<DetectorKind> detectors_run;
};

/// One-to-one pairing of modes whose frequencies agree within `rel_tol`,
/// closest pairs first. Each pair is merged: mean sigma, omega and
/// amplitude, circular mean of phase.
std::vector<Mode> merge_matched(const std::vector<Mode>& a, const std::vector<Mode>& b,
                                double rel_tol);

/// Sequential vote. The first member screens every window; the second runs
/// only when the first approves and approves when it confirms at least one
/// of the first member's modes; the third runs only to break that
/// disagreement and then decides alone.
std::pair<DetectionResult, VoteTrace> vote(const ChannelWindow& window, const DetectorConfig& config,
                                           const Detectors& detectors = Detectors::standard());

/// Baseline that runs all three members on every window and takes the
/// majority.
std::pair<DetectionResult, VoteTrace> crosscheck(const ChannelWindow& window,
                                                 const DetectorConfig& config,
                                                 const Detectors& detectors = Detectors::standard());

/// Per-channel consecutive-window consistency filter.
class TsFilter {
 public:
  struct Entry {
    Mode mode;
    int count = 1;
    std::int64_t last_index = 0;
    bool fired = false;
    // Stable while the mode keeps matching from window to window.
    std::uint64_t lifetime = 0;
  };

  /// Feeds one window's result. Returns modes confirmed by this window that
  /// were not already active. Throws Error(Sequencing) when window_index does
  /// not increase for the channel.
  std::vector<Mode> update(const std::string& channel, std::int64_t window_index,
                           const DetectionResult& result, const DetectorConfig& config);

  /// Confirmed modes that are still being tracked for `channel`.
  std::vector<Mode> active(const std::string& channel) const;

  const std::vector<Entry>* entries(const std::string& channel) const;

 private:
  struct ChannelState {
    std::optional<std::int64_t> last_index;
    std::vector<Entry> entries;
  };
  std::map<std::string, ChannelState> channels_;
  std::uint64_t next_lifetime_ = 1;
};

}  // namespace oscmon::ensemble
