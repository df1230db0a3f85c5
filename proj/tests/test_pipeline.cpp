#include <doctest.h>

#include <cmath>

#include "votepose/pipeline.hpp"
#include "votepose/train.hpp"

using namespace votepose;

namespace {

// Zoomed enough that each cup covers a decent share of the output points.
CameraConfig test_cam_config() {
  CameraConfig cfg;
  cfg.cam = {320, 320, 64, 48};
  cfg.width = 128;
  cfg.height = 96;
  cfg.depth_scale = 1.0;
  return cfg;
}

ObjectDB cup_db() {
  ObjectDB db;
  db.add(make_builtin_object(1, "cup"));
  return db;
}

RigidTransform down_camera(double height) {
  RigidTransform t;
  t.rotation.col(1) = -Vec3d::UnitY();
  t.rotation.col(2) = -Vec3d::UnitZ();
  t.translation = Vec3d(0, 0, height);
  return t;
}

SceneData scene_data(const Scene& scene, const ObjectDB& db) {
  CameraConfig cc = test_cam_config();
  RenderResult r =
      render_scene(scene, db, cc.cam, cc.width, cc.height, cc.depth_scale);
  SceneData data;
  data.depth = r.depth;
  data.instance = r.instance;
  data.camera = cc;
  data.gts = scene_ground_truth(scene, db, r, cc.cam);
  return data;
}

// Two cups resting at fixed spots inside the zoomed view, never occluding.
SceneData make_scene(const ObjectDB& db) {
  const ObjectModel& cup = db.at(1);
  Scene scene;
  scene.world_from_camera = down_camera(800);
  for (double x : {-80.0, 80.0}) {
    Placement p;
    p.class_id = 1;
    p.world_from_object = RigidTransform::rot_z(x > 0 ? 0.6 : 2.1);
    p.world_from_object.translation = Vec3d(x, 0, -cup.bbox_min.z());
    scene.placements.push_back(p);
  }
  return scene_data(scene, db);
}

PreprocessParams tiny_preprocess() {
  PreprocessParams pp;
  pp.layer_sizes = {2048, 512, 256, 192, 160};
  pp.k = 10;
  pp.k_normals = 10;
  return pp;
}

// A small network trained to convergence on a dozen cup scenes. Inference
// runs on the first scene with the exact sampling it was trained on, so the
// checks below probe the pipeline wiring rather than generalization.
struct Fixture {
  ObjectDB db = cup_db();
  TrainDataset data;
  NetworkModel model;

  Fixture() {
    data.objects = db;
    data.scenes.push_back(make_scene(db));
    for (int i = 1; i < 12; ++i) {
      int n = 1 + int(derive_seed(7, uint64_t(i)) % 3);
      data.scenes.push_back(
          scene_data(generate_scene(db, n, derive_seed(123, uint64_t(i))),
                     db));
    }
    TrainConfig cfg;
    cfg.epochs = 400;
    cfg.learning_rate = 0.003;
    cfg.seed = 7;
    cfg.augment = false;
    cfg.val_fraction = 0.01;  // rounds to an empty holdout
    cfg.preprocess = tiny_preprocess();
    NetworkConfig nc;
    nc.n_classes = 2;
    nc.conv_widths = {16, 16, 32, 32};
    nc.head_hidden = {64};
    model = train(cfg, data, init_network<float>(nc, 11)).last;
  }

  InferenceParams params() const {
    InferenceParams p;
    p.preprocess = tiny_preprocess();
    p.detect.min_votes = 8;
    p.seed = train_preprocess_seed(7, 0);
    return p;
  }
};

// Training takes a while; every case and subcase path shares one model.
const Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("inference recovers the objects a model memorized") {
  const Fixture& f = fixture();
  const SceneData& scene = f.data.scenes[0];
  InferenceResult res = run_inference(scene.depth, scene.camera.cam, f.model,
                                      f.db, f.params());

  REQUIRE(res.objects.size() == scene.gts.size());
  // Each true cup center must be claimed by a distinct detection.
  for (const SceneObjectGT& gt : scene.gts) {
    Vec3d center = gt.cam_from_object.apply(f.db.at(1).bbox_center);
    int claims = 0;
    for (const ObjectEstimate& est : res.objects)
      if ((est.detection.center - center).norm() < 10.0) ++claims;
    CHECK(claims == 1);
  }
  for (const ObjectEstimate& est : res.objects) {
    CHECK(est.detection.class_id == 1);
    CHECK(est.valid);
    CHECK(!est.six_dof);
    CHECK(est.pose.is_valid(1e-6));
    CHECK(est.overlap > 0.8);
    CHECK(est.projection_score > 0.4);
  }

  const StageTimes& t = res.times;
  for (double s : t.as_array()) CHECK(s >= 0);
  CHECK(t.load > 0);
  CHECK(t.model > 0);
  CHECK(stage_names()[0] == "Loading point cloud");
  CHECK(stage_names()[5] == "Pose Estimation");

  SUBCASE("inference is deterministic for a seed") {
    InferenceResult again = run_inference(scene.depth, scene.camera.cam,
                                          f.model, f.db, f.params());
    REQUIRE(again.objects.size() == res.objects.size());
    for (std::size_t i = 0; i < res.objects.size(); ++i) {
      CHECK(again.objects[i].pose.translation ==
            res.objects[i].pose.translation);
      CHECK((again.objects[i].pose.rotation - res.objects[i].pose.rotation)
                .cwiseAbs()
                .maxCoeff() == 0.0);
    }
  }

  SUBCASE("refinement off returns the raw vote pose") {
    InferenceParams p = f.params();
    p.refine = false;
    InferenceResult raw = run_inference(scene.depth, scene.camera.cam,
                                        f.model, f.db, p);
    REQUIRE(!raw.objects.empty());
    const ObjectEstimate& est = raw.objects[0];
    RigidTransform direct = pose_from_detection(est.detection);
    CHECK(est.pose.translation == direct.translation);
    CHECK(est.overlap == 0.0);
  }

  SUBCASE("six-dof classes route through the rotation search") {
    InferenceParams p = f.params();
    p.six_dof_classes = {1};
    p.six_dof.min_overlap = 0.3;
    InferenceResult six = run_inference(scene.depth, scene.camera.cam,
                                        f.model, f.db, p);
    REQUIRE(!six.objects.empty());
    for (const ObjectEstimate& est : six.objects) {
      CHECK(est.six_dof);
      if (est.valid) CHECK(est.overlap >= 0.3);
    }
  }
}

TEST_CASE("an empty scene yields empty output, not an error") {
  const Fixture& f = fixture();
  Scene empty;
  empty.world_from_camera = down_camera(800);

  SceneData sd = scene_data(empty, f.db);
  InferenceResult res =
      run_inference(sd.depth, sd.camera.cam, f.model, f.db, f.params());
  CHECK(res.objects.empty());
  CHECK(res.times.pose >= 0);
}
