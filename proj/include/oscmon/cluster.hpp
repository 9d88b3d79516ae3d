#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "oscmon/core.hpp"

namespace oscmon::cluster {

struct DbscanResult {
  std::vector<std::vector<std::size_t>> clusters;  // indices into the input
  std::vector<std::size_t> outliers;
};

/// DBSCAN over positive scalars with the relative neighbourhood
/// |p - q| <= eps_rel * min(p, q). A neighbourhood includes the point itself.
/// Points are visited in ascending order, so clusters come out sorted by
/// their smallest member and members are ascending.
DbscanResult dbscan_1d(std::span<const double> points, double eps_rel, int min_pts);

enum class Classification { Local, InterArea };
const char* to_string(Classification c);

struct ChannelMode {
  std::string channel_id;
  Mode mode;
};

struct ShapeEntry {
  double amplitude = 0.0;  // normalized, max 1
  double phase = 0.0;      // relative to the reference channel
};

struct SystemMode {
  double frequency_hz = 0.0;
  std::map<std::string, Mode> members;
  Classification classification = Classification::Local;
  std::map<std::string, ShapeEntry> mode_shape;

  /// Damping ratio of the member-averaged sigma and omega.
  double damping_ratio() const;
  double damping_factor() const;
};

/// inter_area iff frequency < boundary_hz.
Classification classify(double frequency_hz, double boundary_hz = 0.8);
Classification classify(const SystemMode& mode, double boundary_hz = 0.8);

/// Per-channel amplitude and phase, phases referenced to the strongest
/// channel, amplitudes scaled to a maximum of 1.
std::map<std::string, ShapeEntry> mode_shape(const SystemMode& mode);

/// Groups confirmed channel modes into system modes by frequency
/// (min_pts = 1). A channel contributing several modes to one cluster keeps
/// its largest-amplitude one. Output is sorted by frequency.
std::vector<SystemMode> cluster_modes(std::span<const ChannelMode> confirmed, double eps_rel = 0.03,
                                      double boundary_hz = 0.8);

}  // namespace oscmon::cluster
