#include "oscmon/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace oscmon::cluster {
namespace {

constexpr int kUnvisited = -2;
constexpr int kNoise = -1;

bool neighbours(double p, double q, double eps_rel) { return freqs_match(p, q, eps_rel); }

}  // namespace

DbscanResult dbscan_1d(std::span<const double> points, double eps_rel, int min_pts) {
  DbscanResult out;
  const std::size_t n = points.size();
  if (n == 0) return out;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return points[a] < points[b]; });

  // For positive points the neighbourhood is a contiguous run of the sorted
  // order, so it can be found by scanning outwards.
  auto region = [&](std::size_t pos) {
    std::vector<std::size_t> r;
    const double p = points[order[pos]];
    std::size_t lo = pos;
    while (lo > 0 && neighbours(p, points[order[lo - 1]], eps_rel)) --lo;
    std::size_t hi = pos;
    while (hi + 1 < n && neighbours(p, points[order[hi + 1]], eps_rel)) ++hi;
    for (std::size_t i = lo; i <= hi; ++i) r.push_back(i);
    return r;
  };

  std::vector<int> label(n, kUnvisited);  // indexed by sorted position
  int next_cluster = 0;
  for (std::size_t pos = 0; pos < n; ++pos) {
    if (label[pos] != kUnvisited) continue;
    auto seeds = region(pos);
    if (static_cast<int>(seeds.size()) < min_pts) {
      label[pos] = kNoise;
      continue;
    }
    const int c = next_cluster++;
    label[pos] = c;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const std::size_t q = seeds[s];
      if (label[q] == kNoise) label[q] = c;
      if (label[q] != kUnvisited) continue;
      label[q] = c;
      auto more = region(q);
      if (static_cast<int>(more.size()) >= min_pts) {
        seeds.insert(seeds.end(), more.begin(), more.end());
      }
    }
  }

  out.clusters.assign(static_cast<std::size_t>(next_cluster), {});
  for (std::size_t pos = 0; pos < n; ++pos) {
    if (label[pos] >= 0) {
      out.clusters[static_cast<std::size_t>(label[pos])].push_back(order[pos]);
    } else {
      out.outliers.push_back(order[pos]);
    }
  }
  return out;
}

const char* to_string(Classification c) {
  return c == Classification::Local ? "local" : "inter_area";
}

double SystemMode::damping_factor() const {
  if (members.empty()) return 0.0;
  double s = 0.0;
  for (const auto& [id, m] : members) s += m.damping_factor;
  return s / static_cast<double>(members.size());
}

double SystemMode::damping_ratio() const {
  if (members.empty()) return 0.0;
  double w = 0.0;
  for (const auto& [id, m] : members) w += m.angular_frequency;
  w /= static_cast<double>(members.size());
  return oscmon::damping_ratio(Mode{1.0, damping_factor(), w, 0.0});
}

Classification classify(double frequency_hz, double boundary_hz) {
  return frequency_hz < boundary_hz ? Classification::InterArea : Classification::Local;
}

Classification classify(const SystemMode& mode, double boundary_hz) {
  return classify(mode.frequency_hz, boundary_hz);
}

std::map<std::string, ShapeEntry> mode_shape(const SystemMode& mode) {
  std::map<std::string, ShapeEntry> shape;
  if (mode.members.empty()) return shape;
  // Ties go to the lexicographically first channel (map order).
  auto ref = mode.members.begin();
  for (auto it = mode.members.begin(); it != mode.members.end(); ++it) {
    if (it->second.amplitude > ref->second.amplitude) ref = it;
  }
  const double max_amp = ref->second.amplitude;
  const double ref_phase = ref->second.phase;
  for (const auto& [id, m] : mode.members) {
    ShapeEntry e;
    e.amplitude = max_amp > 0.0 ? m.amplitude / max_amp : 1.0;
    e.phase = id == ref->first ? 0.0 : wrap_phase(m.phase - ref_phase);
    shape.emplace(id, e);
  }
  return shape;
}

std::vector<SystemMode> cluster_modes(std::span<const ChannelMode> confirmed, double eps_rel,
                                      double boundary_hz) {
  std::vector<double> freqs;
  freqs.reserve(confirmed.size());
  for (const auto& cm : confirmed) freqs.push_back(cm.mode.frequency_hz());
  const auto db = dbscan_1d(freqs, eps_rel, 1);

  std::vector<SystemMode> modes;
  for (const auto& members : db.clusters) {
    SystemMode sm;
    for (std::size_t idx : members) {
      const auto& cm = confirmed[idx];
      auto [it, inserted] = sm.members.emplace(cm.channel_id, cm.mode);
      if (inserted) continue;
      const Mode& cur = it->second;
      if (cm.mode.amplitude > cur.amplitude ||
          (cm.mode.amplitude == cur.amplitude && cm.mode.angular_frequency < cur.angular_frequency)) {
        it->second = cm.mode;
      }
    }
    double fsum = 0.0;
    for (const auto& [id, m] : sm.members) fsum += m.frequency_hz();
    sm.frequency_hz = fsum / static_cast<double>(sm.members.size());
    sm.classification = classify(sm.frequency_hz, boundary_hz);
    sm.mode_shape = mode_shape(sm);
    modes.push_back(std::move(sm));
  }
  std::stable_sort(modes.begin(), modes.end(), [](const SystemMode& a, const SystemMode& b) {
    return a.frequency_hz < b.frequency_hz;
  });
  return modes;
}

}  // namespace oscmon::cluster
