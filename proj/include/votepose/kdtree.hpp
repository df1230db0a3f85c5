#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "votepose/geometry.hpp"

namespace votepose {

/// Exact 3-d kd-tree over double-precision points.
/// k-NN results are ordered by (squared distance, index), so ties resolve to
/// the lower index and results are identical to a brute-force sort.
/// Queries are const and safe to run from multiple threads.
class KdTree3 {
 public:
  KdTree3() = default;

  explicit KdTree3(std::span<const Vec3d> points) { build(points); }

  void build(std::span<const Vec3d> points) {
    pts_.assign(points.begin(), points.end());
    index_.resize(pts_.size());
    for (std::size_t i = 0; i < index_.size(); ++i) index_[i] = int32_t(i);
    nodes_.clear();
    nodes_.reserve(pts_.size() / kLeafSize * 2 + 2);
    if (!pts_.empty()) build_node(0, int32_t(pts_.size()));
  }

  std::size_t size() const { return pts_.size(); }

  /// k nearest neighbors of q (k clamped to size). idx_out is sorted by
  /// (d2, index) ascending; d2_out, when given, matches idx_out.
  void knn(const Vec3d& q, int k, std::vector<int32_t>& idx_out,
           std::vector<double>* d2_out = nullptr) const {
    idx_out.clear();
    if (d2_out) d2_out->clear();
    if (pts_.empty() || k <= 0) return;
    k = std::min<int>(k, int(pts_.size()));
    Heap heap;
    heap.reserve(std::size_t(k));
    search_knn(0, q, k, heap);
    std::sort(heap.begin(), heap.end());
    idx_out.resize(heap.size());
    if (d2_out) d2_out->resize(heap.size());
    for (std::size_t i = 0; i < heap.size(); ++i) {
      idx_out[i] = heap[i].second;
      if (d2_out) (*d2_out)[i] = heap[i].first;
    }
  }

  /// Index of the single nearest point; -1 on an empty tree.
  int32_t nearest(const Vec3d& q, double* d2 = nullptr) const {
    if (pts_.empty()) return -1;
    Entry best{std::numeric_limits<double>::infinity(), -1};
    search_nearest(0, q, best);
    if (d2) *d2 = best.first;
    return best.second;
  }

  /// Number of points with distance <= radius (inclusive).
  int count_within(const Vec3d& q, double radius) const {
    int count = 0;
    if (!pts_.empty()) count_node(0, q, radius * radius, count);
    return count;
  }

  /// Indices with distance <= radius, sorted ascending by index.
  void radius(const Vec3d& q, double radius, std::vector<int32_t>& out) const {
    out.clear();
    if (!pts_.empty()) radius_node(0, q, radius * radius, out);
    std::sort(out.begin(), out.end());
  }

 private:
  static constexpr int kLeafSize = 16;
  using Entry = std::pair<double, int32_t>;  // (d2, point index)
  using Heap = std::vector<Entry>;           // max-heap on Entry ordering

  struct Node {
    double split = 0;
    int32_t axis = -1;   // -1 for leaves
    int32_t left = -1;   // child node ids, or [begin,end) into index_ for leaves
    int32_t right = -1;
    int32_t begin = 0;
    int32_t end = 0;
  };

  static double dist2(const Vec3d& a, const Vec3d& b) {
    double dx = a.x() - b.x();
    double dy = a.y() - b.y();
    double dz = a.z() - b.z();
    return dx * dx + dy * dy + dz * dz;
  }

  int32_t build_node(int32_t begin, int32_t end) {
    int32_t id = int32_t(nodes_.size());
    nodes_.emplace_back();
    if (end - begin <= kLeafSize) {
      nodes_[id].begin = begin;
      nodes_[id].end = end;
      return id;
    }
    // Split the widest extent at the median.
    Vec3d lo = pts_[index_[begin]], hi = lo;
    for (int32_t i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(pts_[index_[i]]);
      hi = hi.cwiseMax(pts_[index_[i]]);
    }
    Vec3d extent = hi - lo;
    int axis = 0;
    if (extent.y() > extent.x()) axis = 1;
    if (extent.z() > extent[axis]) axis = 2;
    int32_t mid = begin + (end - begin) / 2;
    std::nth_element(index_.begin() + begin, index_.begin() + mid,
                     index_.begin() + end, [&](int32_t a, int32_t b) {
                       double fa = pts_[a][axis], fb = pts_[b][axis];
                       return fa != fb ? fa < fb : a < b;
                     });
    double split = pts_[index_[mid]][axis];
    int32_t left = build_node(begin, mid);
    int32_t right = build_node(mid, end);
    nodes_[id].split = split;
    nodes_[id].axis = axis;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void consider(Heap& heap, int k, double d2, int32_t idx) const {
    Entry e{d2, idx};
    if (int(heap.size()) < k) {
      heap.push_back(e);
      std::push_heap(heap.begin(), heap.end());
    } else if (e < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = e;
      std::push_heap(heap.begin(), heap.end());
    }
  }

  void search_knn(int32_t id, const Vec3d& q, int k, Heap& heap) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (int32_t i = node.begin; i < node.end; ++i) {
        int32_t idx = index_[i];
        consider(heap, k, dist2(q, pts_[idx]), idx);
      }
      return;
    }
    double delta = q[node.axis] - node.split;
    int32_t near = delta < 0 ? node.left : node.right;
    int32_t far = delta < 0 ? node.right : node.left;
    search_knn(near, q, k, heap);
    // Descend the far side unless every point there is strictly worse than
    // the current worst; equality must descend so index ties stay exact.
    if (int(heap.size()) < k || delta * delta <= heap.front().first)
      search_knn(far, q, k, heap);
  }

  void search_nearest(int32_t id, const Vec3d& q, Entry& best) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (int32_t i = node.begin; i < node.end; ++i) {
        int32_t idx = index_[i];
        Entry e{dist2(q, pts_[idx]), idx};
        if (e < best) best = e;
      }
      return;
    }
    double delta = q[node.axis] - node.split;
    int32_t near = delta < 0 ? node.left : node.right;
    int32_t far = delta < 0 ? node.right : node.left;
    search_nearest(near, q, best);
    if (delta * delta <= best.first) search_nearest(far, q, best);
  }

  void count_node(int32_t id, const Vec3d& q, double r2, int& count) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (int32_t i = node.begin; i < node.end; ++i)
        if (dist2(q, pts_[index_[i]]) <= r2) ++count;
      return;
    }
    double delta = q[node.axis] - node.split;
    int32_t near = delta < 0 ? node.left : node.right;
    int32_t far = delta < 0 ? node.right : node.left;
    count_node(near, q, r2, count);
    if (delta * delta <= r2) count_node(far, q, r2, count);
  }

  void radius_node(int32_t id, const Vec3d& q, double r2,
                   std::vector<int32_t>& out) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (int32_t i = node.begin; i < node.end; ++i) {
        int32_t idx = index_[i];
        if (dist2(q, pts_[idx]) <= r2) out.push_back(idx);
      }
      return;
    }
    double delta = q[node.axis] - node.split;
    int32_t near = delta < 0 ? node.left : node.right;
    int32_t far = delta < 0 ? node.right : node.left;
    radius_node(near, q, r2, out);
    if (delta * delta <= r2) radius_node(far, q, r2, out);
  }

  std::vector<Vec3d> pts_;
  std::vector<int32_t> index_;
  std::vector<Node> nodes_;
};

}  // namespace votepose
