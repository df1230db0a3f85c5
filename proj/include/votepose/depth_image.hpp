#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace votepose {

/// Depth image in raw sensor units. A value of 0 means "no measurement".
/// depth_scale converts raw units to millimeters.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<uint16_t> values;  // row-major, width*height entries
  double depth_scale = 1.0;

  uint16_t at(int u, int v) const { return values[std::size_t(v) * width + u]; }
  uint16_t& at(int u, int v) { return values[std::size_t(v) * width + u]; }
  double depth_mm(int u, int v) const { return double(at(u, v)) * depth_scale; }

  static DepthImage zeros(int width, int height, double depth_scale) {
    DepthImage img;
    img.width = width;
    img.height = height;
    img.depth_scale = depth_scale;
    img.values.assign(std::size_t(width) * height, 0);
    return img;
  }
};

/// Pinhole camera intrinsics, all in pixels.
struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
};

/// Camera config file contents: intrinsics plus depth metadata.
struct CameraConfig {
  CameraIntrinsics cam;
  double depth_scale = 1.0;
  int width = 0;
  int height = 0;
};

// 16-bit binary PGM ("P5", maxval 65535, MSB-first samples per netpbm).
// The stored samples are raw depth units; depth_scale comes from the camera
// config and is applied by the caller.
void save_pgm16(const std::filesystem::path& path, const DepthImage& img);
DepthImage load_pgm16(const std::filesystem::path& path, double depth_scale = 1.0);

// Same container reused for instance-id images.
void save_pgm16_raw(const std::filesystem::path& path, int width, int height,
                    const std::vector<uint16_t>& values);
std::vector<uint16_t> load_pgm16_raw(const std::filesystem::path& path, int* width,
                                     int* height);

// UTF-8 key-value text: fx, fy, cx, cy, depth_scale, width, height.
void save_camera_config(const std::filesystem::path& path, const CameraConfig& cfg);
CameraConfig load_camera_config(const std::filesystem::path& path);

}  // namespace votepose
