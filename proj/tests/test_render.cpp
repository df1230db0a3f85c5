#include <doctest.h>

#include <cmath>

#include "votepose/common.hpp"
#include "votepose/object_model.hpp"
#include "votepose/pyramid.hpp"
#include "votepose/render.hpp"

using namespace votepose;

namespace {

CameraIntrinsics test_cam() { return CameraIntrinsics{400, 400, 160, 120}; }

RigidTransform at_z(double z) {
  RigidTransform t;
  t.translation = Vec3d(0, 0, z);
  return t;
}

}  // namespace

TEST_CASE("empty instance list renders an empty image") {
  RenderResult res = render_meshes({}, test_cam(), 320, 240);
  for (auto v : res.depth.values) CHECK(v == 0);
  for (auto id : res.instance) CHECK(id == 0);
}

TEST_CASE("frontal plane renders its exact depth everywhere it covers") {
  // A box whose near face sits at z = 500, seen head on.
  TriMesh box = make_box_mesh(Vec3d(200, 150, 100));
  MeshInstance ins{&box, at_z(550), 3};
  RenderResult res = render_meshes({{ins}}, test_cam(), 320, 240);

  // The near face spans x in [-100, 100] at z = 500: u in [80, 240].
  int covered = 0;
  for (int v = 0; v < 240; ++v)
    for (int u = 0; u < 320; ++u) {
      bool inside = u > 80 && u < 240 && v > 60 && v < 180;
      if (inside) {
        CHECK(res.depth.at(u, v) == 500);
        CHECK(res.instance[std::size_t(v) * 320 + u] == 3);
        ++covered;
      }
      bool outside = u < 79 || u > 241 || v < 59 || v > 181;
      if (outside) CHECK(res.depth.at(u, v) == 0);
    }
  CHECK(covered > 0);
}

TEST_CASE("sphere center pixel depth equals distance minus radius") {
  const double r = 50, dist = 500;
  TriMesh sphere = make_sphere_mesh(r, 48, 96);
  MeshInstance ins{&sphere, at_z(dist), 1};
  RenderResult res = render_meshes({{ins}}, test_cam(), 320, 240);
  double center_depth = res.depth.depth_mm(160, 120);
  CHECK(std::abs(center_depth - (dist - r)) <= 1.0);
}

TEST_CASE("z-buffer: nearer object wins the occluded pixels") {
  TriMesh big = make_box_mesh(Vec3d(200, 200, 20));
  TriMesh small = make_box_mesh(Vec3d(60, 60, 20));
  MeshInstance back{&big, at_z(800), 1};
  MeshInstance front{&small, at_z(500), 2};
  RenderResult res = render_meshes(std::vector<MeshInstance>{back, front},
                                   test_cam(), 320, 240);
  CHECK(res.instance[std::size_t(120) * 320 + 160] == 2);
  CHECK(res.depth.at(160, 120) == 490);
  // Far from the small box the big one still shows.
  CHECK(res.instance[std::size_t(120) * 320 + 120] == 1);
  CHECK(res.depth.at(120, 120) == 790);
}

TEST_CASE("render then unproject lands on the true surfaces") {
  // Tilted box face: quantization of depth (1 unit) bounds the point error.
  TriMesh box = make_box_mesh(Vec3d(150, 150, 150));
  RigidTransform pose = at_z(600);
  pose.rotation = RigidTransform::rot_x(deg2rad(25)).rotation *
                  RigidTransform::rot_y(deg2rad(-15)).rotation;
  MeshInstance ins{&box, pose, 1};
  RenderResult res = render_meshes({{ins}}, test_cam(), 320, 240);

  UnprojectResult un = unproject(res.depth, test_cam());
  RigidTransform inv = pose.inverse();
  int checked = 0;
  for (const auto& p : un.cloud.positions) {
    Vec3d q = inv.apply(p);  // object frame: |coord| <= 75 on the surface
    double slack = (q.cwiseAbs() - Vec3d::Constant(75.0)).maxCoeff();
    CHECK(std::abs(slack) <= 1.0);
    ++checked;
  }
  CHECK(checked > 1000);
}

TEST_CASE("splat: single point hits its pixel with its depth") {
  std::vector<Vec3d> pts{{0, 0, 500}};
  SplatResult res = splat_points(pts, test_cam(), 320, 240);
  CHECK(res.in_view == 1);
  CHECK(res.depth.at(160, 120) == 500);
  std::size_t nonzero = 0;
  for (auto v : res.depth.values) nonzero += v != 0;
  CHECK(nonzero == 1);
}

TEST_CASE("splat: off-image points are reported, nearest depth kept") {
  std::vector<Vec3d> pts{{10000, 0, 500}, {0, 0, -50}};
  SplatResult res = splat_points(pts, test_cam(), 320, 240);
  CHECK(res.in_view == 0);

  std::vector<Vec3d> stack{{0, 0, 700}, {0, 0, 400}, {0, 0, 900}};
  res = splat_points(stack, test_cam(), 320, 240);
  CHECK(res.in_view == 3);
  CHECK(res.depth.at(160, 120) == 400);
}

TEST_CASE("splat agrees with the mesh render on a flat patch") {
  // A single quad: splatting a closed object differs from z-buffering it
  // wherever a sparse pixel sees only the far side, so keep one surface.
  TriMesh quad;
  quad.vertices = {{-100, -75, 0}, {100, -75, 0}, {100, 75, 0}, {-100, 75, 0}};
  quad.faces = {{0, 1, 2}, {0, 2, 3}};
  RigidTransform pose = at_z(500);
  RenderResult mesh_render = render_meshes({{MeshInstance{&quad, pose, 1}}},
                                           test_cam(), 320, 240);
  auto samples = sample_surface(quad, 1.0, 11);
  std::vector<Vec3d> cam_pts(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    cam_pts[i] = pose.apply(samples[i]);
  SplatResult splat = splat_points(cam_pts, test_cam(), 320, 240);

  int compared = 0;
  for (int v = 0; v < 240; ++v)
    for (int u = 0; u < 320; ++u) {
      if (splat.depth.at(u, v) == 0) continue;
      ++compared;
      CHECK(mesh_render.depth.at(u, v) == splat.depth.at(u, v));
    }
  CHECK(compared > 3000);
}

TEST_CASE("render rejects bad configuration") {
  CHECK_THROWS_AS(render_meshes({}, test_cam(), 0, 240), ConfigError);
  CHECK_THROWS_AS(render_meshes({}, CameraIntrinsics{0, 0, 0, 0}, 320, 240),
                  ConfigError);
  CHECK_THROWS_AS(splat_points({}, test_cam(), 320, -1), ConfigError);
  TriMesh box = make_box_mesh(Vec3d(1, 1, 1));
  MeshInstance no_mesh{nullptr, at_z(10), 1};
  CHECK_THROWS_AS(render_meshes({{no_mesh}}, test_cam(), 32, 24), ConfigError);
}
