#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "votepose/depth_image.hpp"
#include "votepose/point_cloud.hpp"

namespace votepose {

/// Per-layer query index sets and k-NN tables linking consecutive
/// downsampled layers. Immutable once built.
///
/// Layer 0 is the input cloud downsampled to layer_sizes[0]; base_indices
/// maps layer-0 points back into the input cloud. For each layer l >= 1,
/// query_indices[l-1] selects that layer's points from layer l-1, and
/// neighbor_tables[l-1] is a (layer_sizes[l] x k) row-major table of indices
/// into layer l-1. Queries belong to the search pool, so a row may contain
/// the query itself.
struct NeighborPyramid {
  std::vector<int> layer_sizes;
  std::vector<int32_t> base_indices;
  std::vector<std::vector<int32_t>> query_indices;
  std::vector<std::vector<int32_t>> neighbor_tables;
  int k = 20;

  int layers() const { return int(layer_sizes.size()); }
};

struct UnprojectResult {
  PointCloud cloud;
  std::vector<int32_t> pixels;  // source pixel (v * width + u) per point
};

/// Converts a depth image to a camera-frame point cloud in millimeters,
/// one point per pixel with nonzero depth:
///   p = ((u - cx) * z / fx, (v - cy) * z / fy, z),  z = value * depth_scale.
/// Throws DataError if every pixel is zero.
UnprojectResult unproject(const DepthImage& depth, const CameraIntrinsics& cam);

/// Randomly downsamples to exactly `target` points: without replacement when
/// the cloud is large enough, with replacement otherwise. Returns the sampled
/// cloud and the chosen source indices.
std::pair<PointCloud, std::vector<int32_t>> random_downsample(const PointCloud& cloud,
                                                              int target,
                                                              uint64_t seed);

/// Per-point normals from the k_normals-neighborhood covariance: eigenvector
/// of the smallest eigenvalue, unit length, flipped to face the camera
/// (dot(normal, position) <= 0). Degenerate neighborhoods (rank-deficient
/// covariance) get the viewing direction and the kNormalDegenerate flag.
/// Returns the number of degenerate points.
int estimate_normals_inplace(PointCloud& cloud, int k_normals);

PointCloud estimate_normals(const PointCloud& cloud, int k_normals);

/// Builds the neighbor pyramid: downsample the input to layer_sizes[0], then
/// for each subsequent layer pick a random subset of the previous layer and
/// record each query's k exact nearest neighbors (Euclidean) in the previous
/// layer.
NeighborPyramid build_pyramid(const PointCloud& cloud,
                              const std::vector<int>& layer_sizes, int k,
                              uint64_t seed);

inline std::vector<int> default_layer_sizes() {
  return {65536, 16384, 8192, 4096, 2048};
}

struct PreprocessParams {
  std::vector<int> layer_sizes = default_layer_sizes();
  int k = 20;
  int k_normals = 30;
};

/// Network-ready preprocessing output: the layer-0 cloud with normals, the
/// neighbor pyramid, and per-point source pixels for label transfer.
struct Preprocessed {
  PointCloud cloud;  // layer 0
  NeighborPyramid pyramid;
  std::vector<int32_t> base_pixels;
};

struct PreprocessTimes {
  double load_s = 0;       // unprojection + base downsampling
  double normals_s = 0;
  double neighbors_s = 0;
};

Preprocessed preprocess(const DepthImage& depth, const CameraIntrinsics& cam,
                        const PreprocessParams& params, uint64_t seed,
                        PreprocessTimes* times = nullptr);

}  // namespace votepose
