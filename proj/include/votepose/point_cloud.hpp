#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "votepose/geometry.hpp"

namespace votepose {

// Per-point flag bits.
inline constexpr uint8_t kNormalDegenerate = 1;

/// Point cloud in camera frame, millimeters. Normals are unit length and
/// camera-facing once computed.
struct PointCloud {
  std::vector<Vec3d> positions;
  std::vector<Vec3d> normals;      // empty until estimated
  std::vector<uint8_t> flags;      // empty or one entry per point

  std::size_t size() const { return positions.size(); }
  bool has_normals() const { return normals.size() == positions.size(); }
};

/// ASCII PLY export for inspection. Normals and per-point RGB colors are
/// written when present.
void save_ply(const std::filesystem::path& path, const PointCloud& cloud,
              const std::vector<std::array<uint8_t, 3>>* colors = nullptr);

}  // namespace votepose
