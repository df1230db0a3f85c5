#include "votepose/pyramid.hpp"

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <numeric>

#include "votepose/common.hpp"
#include "votepose/kdtree.hpp"

namespace votepose {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<int32_t> sample_indices(std::size_t n, int target, Rng& rng) {
  std::vector<int32_t> out;
  out.reserve(std::size_t(target));
  if (std::size_t(target) <= n) {
    // Partial Fisher-Yates: first `target` entries of a seeded shuffle.
    std::vector<int32_t> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < target; ++i) {
      uint32_t j = uint32_t(i) + rng.bounded(uint32_t(n - std::size_t(i)));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  } else {
    for (int i = 0; i < target; ++i) out.push_back(int32_t(rng.bounded(uint32_t(n))));
  }
  return out;
}

void check_layer_config(const std::vector<int>& layer_sizes, int k) {
  if (layer_sizes.empty()) throw ConfigError("pyramid requires at least one layer");
  for (std::size_t l = 0; l < layer_sizes.size(); ++l) {
    if (layer_sizes[l] <= 0) throw ConfigError("layer sizes must be > 0");
    if (l > 0 && layer_sizes[l] >= layer_sizes[l - 1])
      throw ConfigError("layer sizes must be strictly decreasing");
  }
  if (k < 1) throw ConfigError("neighbor count k must be >= 1");
}

// Query selection + k-NN tables for layers 1..L-1, given layer-0 positions.
void build_upper_layers(NeighborPyramid& pyr, std::vector<Vec3d> prev_positions,
                        uint64_t seed) {
  Rng rng(seed);
  for (std::size_t l = 1; l < pyr.layer_sizes.size(); ++l) {
    if (pyr.k > pyr.layer_sizes[l - 1])
      throw ConfigError("neighbor count k exceeds previous layer size");
    Rng local(rng.next_u64());
    std::vector<int32_t> queries =
        sample_indices(prev_positions.size(), pyr.layer_sizes[l], local);
    KdTree3 tree(prev_positions);
    std::vector<int32_t> table(std::size_t(pyr.layer_sizes[l]) * pyr.k);
    parallel_for(queries.size(), [&](std::size_t qi) {
      thread_local std::vector<int32_t> nbrs;
      tree.knn(prev_positions[queries[qi]], pyr.k, nbrs);
      std::copy(nbrs.begin(), nbrs.end(), table.begin() + qi * pyr.k);
    });
    std::vector<Vec3d> positions(queries.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
      positions[i] = prev_positions[queries[i]];
    pyr.query_indices.push_back(std::move(queries));
    pyr.neighbor_tables.push_back(std::move(table));
    prev_positions = std::move(positions);
  }
}

}  // namespace

UnprojectResult unproject(const DepthImage& depth, const CameraIntrinsics& cam) {
  if (depth.width <= 0 || depth.height <= 0 ||
      depth.values.size() != std::size_t(depth.width) * depth.height)
    throw ConfigError("depth image dimensions inconsistent with value count");
  if (cam.fx <= 0 || cam.fy <= 0) throw ConfigError("camera requires fx,fy > 0");
  UnprojectResult out;
  out.cloud.positions.reserve(depth.values.size());
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      uint16_t raw = depth.at(u, v);
      if (raw == 0) continue;
      double z = double(raw) * depth.depth_scale;
      double x = (u - cam.cx) * z / cam.fx;
      double y = (v - cam.cy) * z / cam.fy;
      out.cloud.positions.emplace_back(x, y, z);
      out.pixels.push_back(int32_t(v) * depth.width + u);
    }
  }
  if (out.cloud.positions.empty())
    throw DataError("depth image contains no measurements (all zeros)");
  return out;
}

std::pair<PointCloud, std::vector<int32_t>> random_downsample(const PointCloud& cloud,
                                                              int target,
                                                              uint64_t seed) {
  if (target <= 0) throw ConfigError("downsample target must be > 0");
  if (cloud.size() == 0) throw DataError("cannot downsample an empty cloud");
  Rng rng(seed);
  std::vector<int32_t> indices = sample_indices(cloud.size(), target, rng);
  PointCloud out;
  out.positions.reserve(indices.size());
  for (int32_t i : indices) out.positions.push_back(cloud.positions[i]);
  if (cloud.has_normals()) {
    out.normals.reserve(indices.size());
    for (int32_t i : indices) out.normals.push_back(cloud.normals[i]);
  }
  if (cloud.flags.size() == cloud.size()) {
    out.flags.reserve(indices.size());
    for (int32_t i : indices) out.flags.push_back(cloud.flags[i]);
  }
  return {std::move(out), std::move(indices)};
}

int estimate_normals_inplace(PointCloud& cloud, int k_normals) {
  if (k_normals < 3) throw ConfigError("normal estimation requires k_normals >= 3");
  if (cloud.size() < std::size_t(k_normals))
    throw ConfigError("cloud smaller than k_normals");
  KdTree3 tree(cloud.positions);
  cloud.normals.assign(cloud.size(), Vec3d::Zero());
  cloud.flags.assign(cloud.size(), 0);
  std::vector<uint8_t> degenerate(cloud.size(), 0);
  parallel_for(cloud.size(), [&](std::size_t i) {
    thread_local std::vector<int32_t> nbrs;
    tree.knn(cloud.positions[i], k_normals, nbrs);
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (int32_t j : nbrs) mean += cloud.positions[j];
    mean /= double(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int32_t j : nbrs) {
      Eigen::Vector3d d = cloud.positions[j] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    // Eigenvalues ascending. Rank < 2 leaves the normal direction undefined.
    const Eigen::Vector3d& evals = eig.eigenvalues();
    bool rank_deficient = evals[2] <= 1e-20 || evals[1] <= 1e-9 * evals[2];
    Eigen::Vector3d n;
    if (rank_deficient) {
      Eigen::Vector3d p = cloud.positions[i];
      double len = p.norm();
      n = len > 0 ? Eigen::Vector3d(-p / len) : Eigen::Vector3d(0, 0, -1);
      degenerate[i] = 1;
      cloud.flags[i] |= kNormalDegenerate;
    } else {
      n = eig.eigenvectors().col(0);
      n.normalize();
      if (n.dot(cloud.positions[i]) > 0) n = -n;
    }
    cloud.normals[i] = n;
  });
  return int(std::accumulate(degenerate.begin(), degenerate.end(), 0));
}

PointCloud estimate_normals(const PointCloud& cloud, int k_normals) {
  PointCloud out = cloud;
  estimate_normals_inplace(out, k_normals);
  return out;
}

NeighborPyramid build_pyramid(const PointCloud& cloud,
                              const std::vector<int>& layer_sizes, int k,
                              uint64_t seed) {
  check_layer_config(layer_sizes, k);
  if (cloud.size() == 0) throw DataError("cannot build a pyramid from an empty cloud");
  NeighborPyramid pyr;
  pyr.layer_sizes = layer_sizes;
  pyr.k = k;
  Rng rng(seed);
  auto [layer, base] = random_downsample(cloud, layer_sizes[0], rng.next_u64());
  pyr.base_indices = std::move(base);
  build_upper_layers(pyr, std::move(layer.positions), rng.next_u64());
  return pyr;
}

Preprocessed preprocess(const DepthImage& depth, const CameraIntrinsics& cam,
                        const PreprocessParams& params, uint64_t seed,
                        PreprocessTimes* times) {
  check_layer_config(params.layer_sizes, params.k);
  auto t0 = std::chrono::steady_clock::now();
  UnprojectResult raw = unproject(depth, cam);
  Preprocessed out;
  auto [layer0, base] =
      random_downsample(raw.cloud, params.layer_sizes[0], derive_seed(seed, 0));
  out.cloud = std::move(layer0);
  out.base_pixels.resize(base.size());
  for (std::size_t i = 0; i < base.size(); ++i)
    out.base_pixels[i] = raw.pixels[base[i]];
  if (times) times->load_s = seconds_since(t0);

  auto t1 = std::chrono::steady_clock::now();
  estimate_normals_inplace(out.cloud, params.k_normals);
  if (times) times->normals_s = seconds_since(t1);

  auto t2 = std::chrono::steady_clock::now();
  out.pyramid.layer_sizes = params.layer_sizes;
  out.pyramid.k = params.k;
  out.pyramid.base_indices = std::move(base);
  build_upper_layers(out.pyramid, out.cloud.positions, derive_seed(seed, 1));
  if (times) times->neighbors_s = seconds_since(t2);
  return out;
}

}  // namespace votepose
