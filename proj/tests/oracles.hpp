// Independent reference implementations the real code is tested against.
// These stay deliberately naive: O(N^2) scans, no shared code with src/.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "votepose/geometry.hpp"

namespace oracle {

// Exact k nearest neighbors by full scan, ties broken by lower index.
inline std::vector<int32_t> knn(const std::vector<votepose::Vec3d>& points,
                                const votepose::Vec3d& query, int k) {
  std::vector<std::pair<double, int32_t>> all;
  all.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    double dx = points[i].x() - query.x();
    double dy = points[i].y() - query.y();
    double dz = points[i].z() - query.z();
    all.emplace_back(dx * dx + dy * dy + dz * dz, int32_t(i));
  }
  std::sort(all.begin(), all.end());
  std::vector<int32_t> out;
  for (int i = 0; i < k && i < int(all.size()); ++i) out.push_back(all[i].second);
  return out;
}

// Count of points with distance <= radius (inclusive).
inline int count_within(const std::vector<votepose::Vec3d>& points,
                        const votepose::Vec3d& query, double radius) {
  int n = 0;
  for (const auto& p : points) {
    double d = (p - query).norm();
    if (d <= radius) ++n;
  }
  return n;
}

// Non-maximum suppression over votes by in-radius neighbor count.
// A vote survives iff no vote within `radius` (inclusive) has a strictly
// greater count, or an equal count with a lower index. Each vote is then
// assigned to its nearest surviving vote among survivors within radius;
// distance ties go to the earlier survivor.
struct NmsResult {
  std::vector<int> survivors;                 // indices into votes
  std::vector<std::vector<int>> members;      // per survivor, assigned votes
};

inline NmsResult nms(const std::vector<votepose::Vec3d>& votes, double radius) {
  const std::size_t n = votes.size();
  std::vector<int> counts(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    counts[i] = count_within(votes, votes[i], radius);
  NmsResult res;
  std::vector<int> owner(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    bool best = true;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d = (votes[j] - votes[i]).norm();
      if (d > radius) continue;
      if (counts[j] > counts[i] || (counts[j] == counts[i] && j < i)) {
        best = false;
        break;
      }
    }
    if (best) res.survivors.push_back(int(i));
  }
  res.members.resize(res.survivors.size());
  for (std::size_t i = 0; i < n; ++i) {
    double best_d = 0;
    int best_s = -1;
    for (std::size_t s = 0; s < res.survivors.size(); ++s) {
      double d =
          (votes[res.survivors[s]] - votes[i]).norm();
      if (d > radius) continue;
      if (best_s < 0 || d < best_d) {
        best_d = d;
        best_s = int(s);
      }
    }
    if (best_s >= 0) {
      owner[i] = best_s;
      res.members[best_s].push_back(int(i));
    }
  }
  return res;
}

// Central finite difference of a scalar function of one coordinate.
inline double central_diff(const std::function<double(double)>& f, double x,
                           double eps) {
  return (f(x + eps) - f(x - eps)) / (2 * eps);
}

// Relative error with an absolute floor, for gradient checks.
inline double rel_err(double a, double b, double floor = 1e-6) {
  double scale = std::max({std::abs(a), std::abs(b), floor});
  return std::abs(a - b) / scale;
}

}  // namespace oracle
