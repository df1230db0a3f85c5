#include "votepose/synth.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "votepose/common.hpp"

namespace votepose {

namespace {

struct Aabb {
  Vec3d lo, hi;

  double volume() const { return (hi - lo).prod(); }

  bool xy_overlaps(const Aabb& o) const {
    return lo.x() < o.hi.x() && o.lo.x() < hi.x() && lo.y() < o.hi.y() &&
           o.lo.y() < hi.y();
  }

  double intersection_volume(const Aabb& o) const {
    Vec3d l = lo.cwiseMax(o.lo), h = hi.cwiseMin(o.hi);
    Vec3d d = (h - l).cwiseMax(0.0);
    return d.prod();
  }
};

// Axis-aligned bounds of the rotated object bbox, relative to its origin.
Aabb rotated_bounds(const ObjectModel& model, const Mat3d& rot) {
  Aabb out{Vec3d::Constant(std::numeric_limits<double>::infinity()),
           Vec3d::Constant(-std::numeric_limits<double>::infinity())};
  for (int corner = 0; corner < 8; ++corner) {
    Vec3d p(corner & 1 ? model.bbox_max.x() : model.bbox_min.x(),
            corner & 2 ? model.bbox_max.y() : model.bbox_min.y(),
            corner & 4 ? model.bbox_max.z() : model.bbox_min.z());
    Vec3d q = rot * p;
    out.lo = out.lo.cwiseMin(q);
    out.hi = out.hi.cwiseMax(q);
  }
  return out;
}

TriMesh make_bin_mesh(const Vec3d& extents) {
  const double hx = extents.x() / 2, hy = extents.y() / 2, hz = extents.z();
  TriMesh bin;
  auto quad = [&bin](const Vec3d& a, const Vec3d& b, const Vec3d& c,
                     const Vec3d& d) {
    int32_t base = int32_t(bin.vertices.size());
    bin.vertices.insert(bin.vertices.end(), {a, b, c, d});
    bin.faces.push_back({base, base + 1, base + 2});
    bin.faces.push_back({base, base + 2, base + 3});
  };
  quad({-hx, -hy, 0}, {hx, -hy, 0}, {hx, hy, 0}, {-hx, hy, 0});  // floor
  quad({-hx, -hy, 0}, {hx, -hy, 0}, {hx, -hy, hz}, {-hx, -hy, hz});
  quad({-hx, hy, 0}, {hx, hy, 0}, {hx, hy, hz}, {-hx, hy, hz});
  quad({-hx, -hy, 0}, {-hx, hy, 0}, {-hx, hy, hz}, {-hx, -hy, hz});
  quad({hx, -hy, 0}, {hx, hy, 0}, {hx, hy, hz}, {hx, -hy, hz});
  return bin;
}

}  // namespace

Scene generate_scene(const ObjectDB& db, int n_objects, uint64_t seed,
                     const SceneParams& params) {
  if (n_objects < 1) throw ConfigError("a scene needs at least one object");
  if (db.models.empty()) throw ConfigError("object registry is empty");
  if ((params.bin_extents.array() <= 0).any())
    throw ConfigError("bin extents must be positive");

  std::vector<int> class_ids;
  for (const auto& [id, model] : db.models) class_ids.push_back(id);

  Scene scene;
  scene.bin_extents = params.bin_extents;
  scene.world_from_camera.rotation.col(0) = Vec3d::UnitX();
  scene.world_from_camera.rotation.col(1) = -Vec3d::UnitY();
  scene.world_from_camera.rotation.col(2) = -Vec3d::UnitZ();
  scene.world_from_camera.translation = Vec3d(0, 0, params.camera_height);

  Rng rng(seed);
  const double hx = params.bin_extents.x() / 2;
  const double hy = params.bin_extents.y() / 2;
  std::vector<Aabb> placed;
  int attempts = 0;
  while (int(scene.placements.size()) < n_objects) {
    if (++attempts > params.max_attempts)
      throw DataError("scene too dense: could not place " +
                      std::to_string(n_objects) + " objects in " +
                      std::to_string(params.max_attempts) + " attempts");
    int class_id = class_ids[std::size_t(rng.bounded(uint32_t(class_ids.size())))];
    const ObjectModel& model = db.at(class_id);

    double yaw = rng.uniform(0, 2 * M_PI);
    double pitch = rng.uniform(0, 2 * M_PI);
    double roll = rng.uniform(0, 2 * M_PI);
    Mat3d rot = (RigidTransform::rot_z(yaw) * RigidTransform::rot_y(pitch) *
                 RigidTransform::rot_x(roll))
                    .rotation;
    Aabb rel = rotated_bounds(model, rot);
    // The rotated bbox must fit between the walls.
    double x_lo = -hx - rel.lo.x(), x_hi = hx - rel.hi.x();
    double y_lo = -hy - rel.lo.y(), y_hi = hy - rel.hi.y();
    if (x_lo > x_hi || y_lo > y_hi) continue;

    Vec3d t(rng.uniform(x_lo, x_hi), rng.uniform(y_lo, y_hi), 0);
    Aabb world{rel.lo + t, rel.hi + t};
    double support = 0;
    for (const Aabb& other : placed)
      if (world.xy_overlaps(other)) support = std::max(support, other.hi.z());
    t.z() = support - rel.lo.z();
    world.lo.z() = support;
    world.hi.z() = support + (rel.hi.z() - rel.lo.z());

    bool ok = true;
    for (const Aabb& other : placed) {
      double cap = params.max_volume_overlap *
                   std::min(world.volume(), other.volume());
      if (world.intersection_volume(other) > cap) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;

    placed.push_back(world);
    Placement p;
    p.class_id = class_id;
    p.world_from_object.rotation = rot;
    p.world_from_object.translation = t;
    scene.placements.push_back(p);
  }
  return scene;
}

RenderResult render_scene(const Scene& scene, const ObjectDB& db,
                          const CameraIntrinsics& cam, int width, int height,
                          double depth_scale) {
  RigidTransform cam_from_world = scene.world_from_camera.inverse();
  TriMesh bin = make_bin_mesh(scene.bin_extents);
  std::vector<MeshInstance> instances;
  instances.push_back({&bin, cam_from_world, 0});
  for (std::size_t i = 0; i < scene.placements.size(); ++i) {
    const Placement& p = scene.placements[i];
    instances.push_back({&db.at(p.class_id).mesh,
                         cam_from_world * p.world_from_object,
                         uint16_t(i + 1)});
  }
  return render_meshes(instances, cam, width, height, depth_scale);
}

std::vector<SceneObjectGT> scene_ground_truth(const Scene& scene,
                                              const ObjectDB& db,
                                              const RenderResult& full,
                                              const CameraIntrinsics& cam) {
  RigidTransform cam_from_world = scene.world_from_camera.inverse();
  const int width = full.depth.width, height = full.depth.height;
  std::vector<SceneObjectGT> out(scene.placements.size());

  std::vector<std::size_t> visible(scene.placements.size(), 0);
  for (uint16_t id : full.instance)
    if (id > 0 && id <= scene.placements.size()) ++visible[id - 1];

  for (std::size_t i = 0; i < scene.placements.size(); ++i) {
    const Placement& p = scene.placements[i];
    SceneObjectGT& gt = out[i];
    gt.class_id = p.class_id;
    gt.cam_from_object = cam_from_world * p.world_from_object;
    // Unoccluded footprint: the object rendered alone (no bin, no others).
    MeshInstance solo{&db.at(p.class_id).mesh, gt.cam_from_object, 1};
    RenderResult alone = render_meshes({{solo}}, cam, width, height,
                                       full.depth.depth_scale);
    std::size_t unoccluded = 0;
    for (uint16_t id : alone.instance) unoccluded += id == 1;
    gt.visibility = unoccluded == 0
                        ? 0.0
                        : double(visible[i]) / double(unoccluded);
  }
  return out;
}

std::vector<int32_t> output_to_base(const NeighborPyramid& pyramid) {
  if (pyramid.layer_sizes.empty()) throw ConfigError("empty pyramid");
  std::vector<int32_t> map(std::size_t(pyramid.layer_sizes.back()));
  for (std::size_t i = 0; i < map.size(); ++i) {
    int32_t j = int32_t(i);
    for (int l = pyramid.layers() - 1; l >= 1; --l)
      j = pyramid.query_indices[std::size_t(l - 1)][std::size_t(j)];
    map[i] = j;
  }
  return map;
}

Vec3d object_top_point(const ObjectModel& model, const RigidTransform& pose) {
  double half = 0.5 * model.bbox_extents.dot(model.symmetry_axis.cwiseAbs());
  Vec3d top = model.bbox_center - half * model.symmetry_axis;
  return pose.apply(top);
}

PointLabels label_points(const Preprocessed& pre,
                         const std::vector<uint16_t>& instance, int width,
                         int height, const std::vector<SceneObjectGT>& gts,
                         const ObjectDB& db, const Vec3d& gt_shift) {
  if (instance.size() != std::size_t(width) * std::size_t(height))
    throw ConfigError("instance image size mismatch");
  std::vector<int32_t> to_base = output_to_base(pre.pyramid);
  PointLabels labels;
  labels.class_id.assign(to_base.size(), 0);
  labels.center_offset.assign(to_base.size(), Vec3d::Zero());
  labels.top_offset.assign(to_base.size(), Vec3d::Zero());
  labels.visibility.assign(to_base.size(), 1.0);

  for (std::size_t i = 0; i < to_base.size(); ++i) {
    int32_t base = to_base[i];
    int32_t px = pre.base_pixels[std::size_t(base)];
    uint16_t id = instance[std::size_t(px)];
    if (id == 0 || id > gts.size()) continue;  // background point
    const SceneObjectGT& gt = gts[id - 1];
    const ObjectModel& model = db.at(gt.class_id);
    Vec3d pos = pre.cloud.positions[std::size_t(base)];
    Vec3d center = gt.cam_from_object.apply(model.bbox_center) + gt_shift;
    Vec3d top = object_top_point(model, gt.cam_from_object) + gt_shift;
    labels.class_id[i] = gt.class_id;
    labels.center_offset[i] = center - pos;
    labels.top_offset[i] = top - pos;
    labels.visibility[i] = gt.visibility;
  }
  return labels;
}

namespace {

void validate(const AugmentationConfig& cfg) {
  for (double p : {cfg.p_circles, cfg.p_noise, cfg.p_blur, cfg.p_crop,
                   cfg.p_edges})
    if (p < 0 || p > 1)
      throw ConfigError("augmentation probabilities must be in [0,1]");
  if (cfg.min_circles < 0 || cfg.max_circles < cfg.min_circles)
    throw ConfigError("bad circle count range");
  if (cfg.min_circle_radius <= 0 ||
      cfg.max_circle_radius < cfg.min_circle_radius)
    throw ConfigError("bad circle radius range");
  if (cfg.noise_sigma < 0) throw ConfigError("noise sigma must be >= 0");
  if (cfg.min_crop_fraction <= 0 || cfg.min_crop_fraction > 1)
    throw ConfigError("crop fraction must be in (0,1]");
  if (cfg.z_offset_max < cfg.z_offset_min)
    throw ConfigError("bad z offset range");
  if (cfg.canny_sigma <= 0 || cfg.canny_low < 0 ||
      cfg.canny_high < cfg.canny_low)
    throw ConfigError("bad edge removal parameters");
}

uint16_t clamp_units(double units) {
  if (units < 1.0) return 1;
  if (units > 65535.0) return 65535;
  return uint16_t(std::llround(units));
}

void cut_circles(DepthImage& img, const AugmentationConfig& cfg, Rng& rng) {
  int count = cfg.min_circles +
              int(rng.bounded(uint32_t(cfg.max_circles - cfg.min_circles + 1)));
  for (int c = 0; c < count; ++c) {
    int cu = int(rng.bounded(uint32_t(img.width)));
    int cv = int(rng.bounded(uint32_t(img.height)));
    double r = rng.uniform(cfg.min_circle_radius, cfg.max_circle_radius);
    double r2 = r * r;
    int ir = int(std::ceil(r));
    for (int dv = -ir; dv <= ir; ++dv)
      for (int du = -ir; du <= ir; ++du) {
        if (double(du) * du + double(dv) * dv > r2) continue;
        int u = cu + du, v = cv + dv;
        if (u < 0 || u >= img.width || v < 0 || v >= img.height) continue;
        img.at(u, v) = 0;
      }
  }
}

void add_noise(DepthImage& img, double sigma_mm, Rng& rng) {
  for (auto& value : img.values) {
    if (value == 0) continue;
    double mm = double(value) * img.depth_scale + rng.normal() * sigma_mm;
    value = clamp_units(mm / img.depth_scale);
  }
}

void box_blur(DepthImage& img, int kernel) {
  const int r = kernel / 2;
  DepthImage src = img;
  for (int v = 0; v < img.height; ++v)
    for (int u = 0; u < img.width; ++u) {
      if (src.at(u, v) == 0) continue;  // holes stay holes
      double sum = 0;
      int n = 0;
      for (int dv = -r; dv <= r; ++dv)
        for (int du = -r; du <= r; ++du) {
          int uu = u + du, vv = v + dv;
          if (uu < 0 || uu >= img.width || vv < 0 || vv >= img.height)
            continue;
          uint16_t z = src.at(uu, vv);
          if (z == 0) continue;
          sum += double(z);
          ++n;
        }
      img.at(u, v) = uint16_t(std::llround(sum / n));
    }
}

// Shared by the depth crop and the instance-image replay; both must remap
// pixels identically.
inline int crop_src(int out_coord, int out_size, int crop_size, int offset) {
  return offset + int(int64_t(out_coord) * crop_size / out_size);
}

void apply_crop(DepthImage& img, const AugmentationConfig& cfg, Rng& rng,
                AugTrace& trace) {
  trace.crop_w = std::max(
      1, int(std::lround(img.width * rng.uniform(cfg.min_crop_fraction, 1.0))));
  trace.crop_h = std::max(
      1,
      int(std::lround(img.height * rng.uniform(cfg.min_crop_fraction, 1.0))));
  trace.crop_x0 = int(rng.bounded(uint32_t(img.width - trace.crop_w + 1)));
  trace.crop_y0 = int(rng.bounded(uint32_t(img.height - trace.crop_h + 1)));
  trace.z_offset = rng.uniform(cfg.z_offset_min, cfg.z_offset_max);

  DepthImage src = img;
  for (int v = 0; v < img.height; ++v)
    for (int u = 0; u < img.width; ++u) {
      int su = crop_src(u, img.width, trace.crop_w, trace.crop_x0);
      int sv = crop_src(v, img.height, trace.crop_h, trace.crop_y0);
      uint16_t z = src.at(su, sv);
      if (z != 0)
        z = clamp_units(double(z) + trace.z_offset / img.depth_scale);
      img.at(u, v) = z;
    }
}

// Depth-discontinuity detection: Gaussian smooth, Sobel gradients,
// non-maximum suppression, double-threshold hysteresis. Runs on the depth
// normalized to [0,1]; missing pixels count as 0 so silhouettes register.
std::vector<uint8_t> depth_edges(const DepthImage& img, double sigma,
                                 double low_frac, double high_frac) {
  const int w = img.width, h = img.height;
  const std::size_t n = std::size_t(w) * h;
  uint16_t dmin = 65535, dmax = 0;
  for (uint16_t z : img.values)
    if (z != 0) {
      dmin = std::min(dmin, z);
      dmax = std::max(dmax, z);
    }
  std::vector<float> gray(n, 0.0f);
  const double range = dmax > dmin ? double(dmax - dmin) : 1.0;
  for (std::size_t i = 0; i < n; ++i)
    if (img.values[i] != 0)
      gray[i] = float((img.values[i] - dmin) / range);

  // Separable Gaussian with clamped borders.
  const int r = int(std::ceil(3 * sigma));
  std::vector<double> kernel(std::size_t(2 * r + 1));
  double ksum = 0;
  for (int i = -r; i <= r; ++i)
    ksum += kernel[std::size_t(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& k : kernel) k /= ksum;
  auto clampi = [](int x, int lo, int hi) { return std::min(std::max(x, lo), hi); };
  std::vector<float> tmp(n), smooth(n);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      double s = 0;
      for (int i = -r; i <= r; ++i)
        s += kernel[std::size_t(i + r)] *
             gray[std::size_t(v) * w + clampi(u + i, 0, w - 1)];
      tmp[std::size_t(v) * w + u] = float(s);
    }
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      double s = 0;
      for (int i = -r; i <= r; ++i)
        s += kernel[std::size_t(i + r)] *
             tmp[std::size_t(clampi(v + i, 0, h - 1)) * w + u];
      smooth[std::size_t(v) * w + u] = float(s);
    }

  std::vector<float> mag(n, 0.0f);
  std::vector<uint8_t> dir(n, 0);  // 0:horiz 1:diag/ 2:vert 3:diag\'
  double max_mag = 0;
  auto at = [&](int u, int v) {
    return double(smooth[std::size_t(clampi(v, 0, h - 1)) * w +
                         clampi(u, 0, w - 1)]);
  };
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      double gx = at(u + 1, v - 1) + 2 * at(u + 1, v) + at(u + 1, v + 1) -
                  at(u - 1, v - 1) - 2 * at(u - 1, v) - at(u - 1, v + 1);
      double gy = at(u - 1, v + 1) + 2 * at(u, v + 1) + at(u + 1, v + 1) -
                  at(u - 1, v - 1) - 2 * at(u, v - 1) - at(u + 1, v - 1);
      double m = std::hypot(gx, gy);
      mag[std::size_t(v) * w + u] = float(m);
      max_mag = std::max(max_mag, m);
      double angle = std::atan2(gy, gx);  // [-pi, pi]
      double deg = angle * 180.0 / M_PI;
      if (deg < 0) deg += 180.0;
      uint8_t d = 0;
      if (deg >= 22.5 && deg < 67.5)
        d = 1;
      else if (deg >= 67.5 && deg < 112.5)
        d = 2;
      else if (deg >= 112.5 && deg < 157.5)
        d = 3;
      dir[std::size_t(v) * w + u] = d;
    }
  if (max_mag <= 0) return std::vector<uint8_t>(n, 0);

  const double low = low_frac * max_mag, high = high_frac * max_mag;
  std::vector<uint8_t> state(n, 0);  // 0 none, 1 weak, 2 strong
  auto mag_at = [&](int u, int v) {
    if (u < 0 || u >= w || v < 0 || v >= h) return 0.0;
    return double(mag[std::size_t(v) * w + u]);
  };
  static constexpr int kStep[4][2] = {{1, 0}, {1, 1}, {0, 1}, {-1, 1}};
  std::deque<std::size_t> strong;
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      std::size_t i = std::size_t(v) * w + u;
      double m = mag[i];
      if (m < low) continue;
      const int* s = kStep[dir[i]];
      if (m < mag_at(u + s[0], v + s[1]) || m < mag_at(u - s[0], v - s[1]))
        continue;  // not a ridge point
      state[i] = m >= high ? 2 : 1;
      if (state[i] == 2) strong.push_back(i);
    }
  std::vector<uint8_t> edge(n, 0);
  while (!strong.empty()) {
    std::size_t i = strong.front();
    strong.pop_front();
    if (edge[i]) continue;
    edge[i] = 1;
    int u = int(i % std::size_t(w)), v = int(i / std::size_t(w));
    for (int dv = -1; dv <= 1; ++dv)
      for (int du = -1; du <= 1; ++du) {
        int uu = u + du, vv = v + dv;
        if (uu < 0 || uu >= w || vv < 0 || vv >= h) continue;
        std::size_t j = std::size_t(vv) * w + uu;
        if (state[j] != 0 && !edge[j]) strong.push_back(j);
      }
  }
  return edge;
}

void remove_edges(DepthImage& img, const AugmentationConfig& cfg) {
  std::vector<uint8_t> edge =
      depth_edges(img, cfg.canny_sigma, cfg.canny_low, cfg.canny_high);
  // Dilate by one pixel, then drop the depth there.
  for (int v = 0; v < img.height; ++v)
    for (int u = 0; u < img.width; ++u) {
      bool near_edge = false;
      for (int dv = -1; dv <= 1 && !near_edge; ++dv)
        for (int du = -1; du <= 1 && !near_edge; ++du) {
          int uu = u + du, vv = v + dv;
          if (uu < 0 || uu >= img.width || vv < 0 || vv >= img.height)
            continue;
          near_edge = edge[std::size_t(vv) * img.width + uu] != 0;
        }
      if (near_edge) img.at(u, v) = 0;
    }
}

}  // namespace

DepthImage augment(const DepthImage& depth, const AugmentationConfig& cfg,
                   uint64_t seed, AugTrace* trace) {
  validate(cfg);
  if (depth.width <= 0 || depth.height <= 0)
    throw ConfigError("cannot augment an empty image");
  DepthImage img = depth;
  AugTrace local;
  AugTrace& t = trace ? *trace : local;
  t = AugTrace{};
  Rng rng(seed);

  if (rng.uniform() < cfg.p_circles) {
    t.circles = true;
    cut_circles(img, cfg, rng);
  }
  if (rng.uniform() < cfg.p_noise) {
    t.noise = true;
    add_noise(img, cfg.noise_sigma, rng);
  }
  if (rng.uniform() < cfg.p_blur) {
    t.blur = true;
    box_blur(img, rng.bounded(2) == 0 ? 3 : 5);
  }
  if (rng.uniform() < cfg.p_crop) {
    t.crop = true;
    apply_crop(img, cfg, rng, t);
  }
  if (rng.uniform() < cfg.p_edges) {
    t.edges = true;
    remove_edges(img, cfg);
  }
  return img;
}

std::vector<uint16_t> replay_crop(const std::vector<uint16_t>& ids, int width,
                                  int height, const AugTrace& trace) {
  if (ids.size() != std::size_t(width) * std::size_t(height))
    throw ConfigError("instance image size mismatch");
  if (!trace.crop) return ids;
  std::vector<uint16_t> out(ids.size());
  for (int v = 0; v < height; ++v)
    for (int u = 0; u < width; ++u) {
      int su = crop_src(u, width, trace.crop_w, trace.crop_x0);
      int sv = crop_src(v, height, trace.crop_h, trace.crop_y0);
      out[std::size_t(v) * width + u] = ids[std::size_t(sv) * width + su];
    }
  return out;
}

void save_scene(const std::filesystem::path& dir, const SceneData& data) {
  std::filesystem::create_directories(dir);
  save_pgm16(dir / "depth.pgm", data.depth);
  save_pgm16_raw(dir / "instance.pgm", data.depth.width, data.depth.height,
                 data.instance);
  save_camera_config(dir / "camera.txt", data.camera);
  std::ofstream out(dir / "gt.txt");
  if (!out) throw DataError("cannot write " + (dir / "gt.txt").string());
  out.precision(12);
  for (const SceneObjectGT& gt : data.gts) {
    out << gt.class_id;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out << ' ' << gt.cam_from_object.rotation(r, c);
    for (int r = 0; r < 3; ++r) out << ' ' << gt.cam_from_object.translation(r);
    out << ' ' << gt.visibility << '\n';
  }
}

SceneData load_scene(const std::filesystem::path& dir) {
  SceneData data;
  data.camera = load_camera_config(dir / "camera.txt");
  data.depth = load_pgm16(dir / "depth.pgm", data.camera.depth_scale);
  int iw = 0, ih = 0;
  data.instance = load_pgm16_raw(dir / "instance.pgm", &iw, &ih);
  if (iw != data.depth.width || ih != data.depth.height)
    throw DataError("instance image does not match depth image in " +
                    dir.string());
  std::ifstream in(dir / "gt.txt");
  if (!in) throw DataError("cannot read " + (dir / "gt.txt").string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    SceneObjectGT gt;
    bool ok = bool(ss >> gt.class_id);
    for (int r = 0; r < 3 && ok; ++r)
      for (int c = 0; c < 3 && ok; ++c)
        ok = bool(ss >> gt.cam_from_object.rotation(r, c));
    for (int r = 0; r < 3 && ok; ++r)
      ok = bool(ss >> gt.cam_from_object.translation(r));
    ok = ok && bool(ss >> gt.visibility);
    if (!ok)
      throw DataError("bad ground-truth line " + std::to_string(lineno) +
                      " in " + (dir / "gt.txt").string());
    data.gts.push_back(gt);
  }
  return data;
}

void generate_dataset(const std::filesystem::path& root, const ObjectDB& db,
                      const DatasetParams& params, uint64_t seed) {
  if (params.n_scenes < 1) throw ConfigError("dataset needs at least one scene");
  if (params.min_objects < 1 || params.max_objects < params.min_objects)
    throw ConfigError("bad objects-per-scene range");
  if (params.camera.width <= 0 || params.camera.height <= 0)
    throw ConfigError("dataset camera needs a resolution");
  std::filesystem::create_directories(root);
  save_object_manifest(root / "objects.txt", db);

  parallel_for(std::size_t(params.n_scenes), [&](std::size_t i) {
    uint64_t scene_seed = derive_seed(seed, uint64_t(i));
    Rng rng(derive_seed(scene_seed, 0));
    int n_objects =
        params.min_objects +
        int(rng.bounded(uint32_t(params.max_objects - params.min_objects + 1)));
    Scene scene =
        generate_scene(db, n_objects, derive_seed(scene_seed, 1), params.scene);
    SceneData data;
    data.camera = params.camera;
    RenderResult render =
        render_scene(scene, db, params.camera.cam, params.camera.width,
                     params.camera.height, params.camera.depth_scale);
    data.depth = render.depth;
    data.instance = render.instance;
    data.gts = scene_ground_truth(scene, db, render, params.camera.cam);
    char name[32];
    std::snprintf(name, sizeof name, "scene_%04zu", i);
    save_scene(root / name, data);
  });
}

std::vector<std::filesystem::path> list_scene_dirs(
    const std::filesystem::path& root) {
  std::vector<std::filesystem::path> dirs;
  if (!std::filesystem::is_directory(root))
    throw DataError("dataset root not found: " + root.string());
  for (const auto& entry : std::filesystem::directory_iterator(root))
    if (entry.is_directory() &&
        entry.path().filename().string().rfind("scene_", 0) == 0)
      dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

}  // namespace votepose
