#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "votepose/depth_image.hpp"
#include "votepose/geometry.hpp"
#include "votepose/object_model.hpp"

namespace votepose {

/// One mesh posed in the camera frame (camera-from-object).
struct MeshInstance {
  const TriMesh* mesh = nullptr;
  RigidTransform pose;
  uint16_t instance_id = 0;
};

struct RenderResult {
  DepthImage depth;
  std::vector<uint16_t> instance;  // row-major, 0 = background
};

// Geometry closer than this is clipped; scenes are far from the camera.
inline constexpr double kNearClipMm = 1.0;

/// Z-buffer triangle rasterization. Pixel (u, v) samples the ray that
/// unprojection assigns to it: x = (u - cx) z / fx, y = (v - cy) z / fy.
/// Depth is perspective-correct (linear 1/z) and quantized to depth units
/// on output; 0 stays "no measurement". Triangles touching the near plane
/// are skipped.
RenderResult render_meshes(std::span<const MeshInstance> instances,
                           const CameraIntrinsics& cam, int width, int height,
                           double depth_scale = 1.0);

struct SplatResult {
  DepthImage depth;
  int in_view = 0;  // points that landed inside the image
};

/// Nearest-pixel point splatting with a min-z buffer, same pixel convention
/// as render_meshes. Points are in the camera frame, millimeters.
SplatResult splat_points(std::span<const Vec3d> points,
                         const CameraIntrinsics& cam, int width, int height,
                         double depth_scale = 1.0);

}  // namespace votepose
