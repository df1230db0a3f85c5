#include "votepose/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "votepose/common.hpp"

namespace votepose {

namespace {

inline uint16_t quantize_depth(double z_mm, double depth_scale) {
  double units = z_mm / depth_scale;
  if (units < 1.0) return 1;  // 0 is reserved for "no measurement"
  if (units > 65535.0) return 65535;
  return uint16_t(std::llround(units));
}

struct ZBuffer {
  int width, height;
  std::vector<double> z;       // mm, +inf = empty
  std::vector<uint16_t> inst;

  ZBuffer(int w, int h)
      : width(w),
        height(h),
        z(std::size_t(w) * h, std::numeric_limits<double>::infinity()),
        inst(std::size_t(w) * h, 0) {}

  void write(int u, int v, double depth, uint16_t id) {
    std::size_t px = std::size_t(v) * width + u;
    if (depth < z[px]) {
      z[px] = depth;
      inst[px] = id;
    }
  }
};

void rasterize_triangle(ZBuffer& buf, const CameraIntrinsics& cam, const Vec3d& a,
                        const Vec3d& b, const Vec3d& c, uint16_t id) {
  if (a.z() <= kNearClipMm || b.z() <= kNearClipMm || c.z() <= kNearClipMm)
    return;
  const double au = cam.fx * a.x() / a.z() + cam.cx;
  const double av = cam.fy * a.y() / a.z() + cam.cy;
  const double bu = cam.fx * b.x() / b.z() + cam.cx;
  const double bv = cam.fy * b.y() / b.z() + cam.cy;
  const double cu = cam.fx * c.x() / c.z() + cam.cx;
  const double cv = cam.fy * c.y() / c.z() + cam.cy;

  int u0 = std::max(0, int(std::ceil(std::min({au, bu, cu}))));
  int u1 = std::min(buf.width - 1, int(std::floor(std::max({au, bu, cu}))));
  int v0 = std::max(0, int(std::ceil(std::min({av, bv, cv}))));
  int v1 = std::min(buf.height - 1, int(std::floor(std::max({av, bv, cv}))));
  if (u0 > u1 || v0 > v1) return;

  const double area = (bu - au) * (cv - av) - (bv - av) * (cu - au);
  if (std::abs(area) < 1e-12) return;
  const double inv_area = 1.0 / area;
  const double iza = 1.0 / a.z(), izb = 1.0 / b.z(), izc = 1.0 / c.z();

  for (int v = v0; v <= v1; ++v) {
    for (int u = u0; u <= u1; ++u) {
      // Signed sub-areas; no winding assumption, so both orientations fill.
      // w2 gets its own edge function: deriving it as 1-w0-w1 loses an ulp
      // and drops pixels whose center lies exactly on the a-b edge.
      double w0 = ((cu - bu) * (v - bv) - (cv - bv) * (u - bu)) * inv_area;
      double w1 = ((au - cu) * (v - cv) - (av - cv) * (u - cu)) * inv_area;
      double w2 = ((bu - au) * (v - av) - (bv - av) * (u - au)) * inv_area;
      if (w0 < 0 || w1 < 0 || w2 < 0) continue;
      double inv_z = w0 * iza + w1 * izb + w2 * izc;
      if (inv_z <= 0) continue;
      buf.write(u, v, 1.0 / inv_z, id);
    }
  }
}

}  // namespace

RenderResult render_meshes(std::span<const MeshInstance> instances,
                           const CameraIntrinsics& cam, int width, int height,
                           double depth_scale) {
  if (width <= 0 || height <= 0) throw ConfigError("render size must be positive");
  if (cam.fx <= 0 || cam.fy <= 0) throw ConfigError("render needs positive focal lengths");
  if (depth_scale <= 0) throw ConfigError("depth scale must be positive");
  ZBuffer buf(width, height);
  std::vector<Vec3d> cam_verts;
  for (const auto& ins : instances) {
    if (!ins.mesh) throw ConfigError("mesh instance without a mesh");
    cam_verts.resize(ins.mesh->vertices.size());
    for (std::size_t i = 0; i < cam_verts.size(); ++i)
      cam_verts[i] = ins.pose.apply(ins.mesh->vertices[i]);
    for (const auto& f : ins.mesh->faces)
      rasterize_triangle(buf, cam, cam_verts[f[0]], cam_verts[f[1]],
                         cam_verts[f[2]], ins.instance_id);
  }
  RenderResult out;
  out.depth = DepthImage::zeros(width, height, depth_scale);
  out.instance.assign(std::size_t(width) * height, 0);
  for (std::size_t px = 0; px < buf.z.size(); ++px) {
    if (!std::isfinite(buf.z[px])) continue;
    out.depth.values[px] = quantize_depth(buf.z[px], depth_scale);
    out.instance[px] = buf.inst[px];
  }
  return out;
}

SplatResult splat_points(std::span<const Vec3d> points,
                         const CameraIntrinsics& cam, int width, int height,
                         double depth_scale) {
  if (width <= 0 || height <= 0) throw ConfigError("splat size must be positive");
  if (depth_scale <= 0) throw ConfigError("depth scale must be positive");
  std::vector<double> zbuf(std::size_t(width) * height,
                           std::numeric_limits<double>::infinity());
  int in_view = 0;
  for (const auto& p : points) {
    if (p.z() <= kNearClipMm) continue;
    int u = int(std::lround(cam.fx * p.x() / p.z() + cam.cx));
    int v = int(std::lround(cam.fy * p.y() / p.z() + cam.cy));
    if (u < 0 || u >= width || v < 0 || v >= height) continue;
    ++in_view;
    std::size_t px = std::size_t(v) * width + u;
    zbuf[px] = std::min(zbuf[px], p.z());
  }
  SplatResult out;
  out.depth = DepthImage::zeros(width, height, depth_scale);
  out.in_view = in_view;
  for (std::size_t px = 0; px < zbuf.size(); ++px)
    if (std::isfinite(zbuf[px]))
      out.depth.values[px] = quantize_depth(zbuf[px], depth_scale);
  return out;
}

}  // namespace votepose
