#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "votepose/train.hpp"
#include "votepose/weights_io.hpp"

using namespace votepose;

namespace {

CameraConfig test_cam_config() {
  CameraConfig cfg;
  cfg.cam = {200, 200, 64, 48};
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

SceneData make_scene(const ObjectDB& db, int n_objects, uint64_t seed) {
  CameraConfig cc = test_cam_config();
  Scene scene = generate_scene(db, n_objects, seed);
  RenderResult r =
      render_scene(scene, db, cc.cam, cc.width, cc.height, cc.depth_scale);
  SceneData data;
  data.depth = r.depth;
  data.instance = r.instance;
  data.camera = cc;
  data.gts = scene_ground_truth(scene, db, r, cc.cam);
  return data;
}

TrainDataset small_dataset(const ObjectDB& db, int n_scenes, uint64_t seed) {
  TrainDataset data;
  data.objects = db;
  for (int i = 0; i < n_scenes; ++i)
    data.scenes.push_back(make_scene(db, 2, derive_seed(seed, uint64_t(i))));
  return data;
}

PreprocessParams tiny_preprocess() {
  PreprocessParams pp;
  pp.layer_sizes = {2048, 512, 256, 128, 64};
  pp.k = 10;
  pp.k_normals = 10;
  return pp;
}

NetworkConfig tiny_net(int n_classes) {
  NetworkConfig nc;
  nc.n_classes = n_classes;
  nc.conv_widths = {8, 8, 16, 16};
  nc.head_hidden = {32};
  return nc;
}

std::vector<std::vector<float>> snapshot(NetworkModel model) {
  std::vector<std::vector<float>> out;
  visit_params(model, [&](const std::string&, std::vector<float>& t) {
    out.push_back(t);
  });
  return out;
}

// A flat scene whose per-class pixel counts are chosen directly: `counts[c]`
// pixels of class c, everything else unmeasured. Class c > 0 appears as
// instance id c backed by a ground-truth entry of that class.
SceneData counted_scene(const std::vector<int>& counts) {
  const int w = 64;
  int total = 0;
  for (int c : counts) total += c;
  const int h = (total + w - 1) / w + 1;
  SceneData s;
  s.depth = DepthImage::zeros(w, h, 1.0);
  s.instance.assign(std::size_t(w) * std::size_t(h), 0);
  s.camera = test_cam_config();
  for (std::size_t c = 1; c < counts.size(); ++c) {
    SceneObjectGT gt;
    gt.class_id = int(c);
    gt.visibility = 1.0;
    s.gts.push_back(gt);
  }
  std::size_t p = 0;
  for (std::size_t c = 0; c < counts.size(); ++c)
    for (int i = 0; i < counts[c]; ++i, ++p) {
      s.depth.values[p] = 500;
      s.instance[p] = uint16_t(c);
    }
  return s;
}

std::filesystem::path temp_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  SUBCASE("zero epochs") {
    cfg.epochs = 0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
  }
  SUBCASE("validation fraction bounds") {
    cfg.val_fraction = 0.0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
    cfg.val_fraction = 1.0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
  }
  SUBCASE("learning rate") {
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(validate(cfg), ConfigError);
  }
  SUBCASE("train rejects a zero-epoch config too") {
    TrainDataset data;
    data.objects = cup_db();
    data.scenes.push_back(counted_scene({100, 50}));
    cfg.epochs = 0;
    NetworkModel model = init_network<float>(tiny_net(2), 1);
    CHECK_THROWS_AS(train(cfg, data, model), ConfigError);
  }
}

TEST_CASE("class weights follow inverse sample counts") {
  TrainDataset data;
  data.objects = cup_db();

  SUBCASE("equal counts give equal unit weights") {
    data.scenes.push_back(counted_scene({300, 300}));
    auto w = compute_class_weights(data, 2, 1000.0);
    REQUIRE(w.size() == 2);
    CHECK(w[0] == 1.0);
    CHECK(w[1] == 1.0);
  }
  SUBCASE("9:1 imbalance gives a 9x weight ratio") {
    data.scenes.push_back(counted_scene({900, 100}));
    auto w = compute_class_weights(data, 2, 1000.0);
    CHECK(w[1] / w[0] == doctest::Approx(9.0));
    CHECK(w[0] == doctest::Approx(1000.0 / (2 * 900.0)));
    CHECK(w[1] == doctest::Approx(1000.0 / (2 * 100.0)));
  }
  SUBCASE("an absent class is capped and reported") {
    data.scenes.push_back(counted_scene({200, 100, 0}));
    std::vector<int> capped;
    auto w = compute_class_weights(data, 3, 123.0, &capped);
    CHECK(w[2] == 123.0);
    REQUIRE(capped.size() == 1);
    CHECK(capped[0] == 2);
  }
  SUBCASE("counts accumulate across scenes and respect the subset") {
    data.scenes.push_back(counted_scene({100, 100}));
    data.scenes.push_back(counted_scene({300, 100}));
    auto all = compute_class_weights(data, 2, 1000.0);
    CHECK(all[1] / all[0] == doctest::Approx(2.0));  // 400 bg vs 200 fg
    std::vector<std::size_t> first = {0};
    auto sub = compute_class_weights(data, 2, 1000.0, nullptr, &first);
    CHECK(sub[0] == 1.0);
    CHECK(sub[1] == 1.0);
  }
}

TEST_CASE("training memorizes a single scene") {
  ObjectDB db = cup_db();
  TrainDataset data = small_dataset(db, 1, 99);

  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 0.02;
  cfg.seed = 7;
  cfg.augment = false;
  cfg.preprocess = tiny_preprocess();

  NetworkModel init = init_network<float>(tiny_net(2), 11);
  TrainResult res = train(cfg, data, init);
  REQUIRE(res.metrics.size() == 50);

  // Full-batch descent on one scene: early epochs improve monotonically and
  // the end state sits well below where it started.
  for (int e = 1; e < 10; ++e)
    CHECK(res.metrics[e].train_loss < res.metrics[e - 1].train_loss);
  CHECK(res.metrics[49].train_loss < 0.1 * res.metrics[0].train_loss);

  // The logged decomposition adds back up to the total.
  for (const EpochMetrics& m : res.metrics) {
    CHECK(std::abs(m.seg_loss + m.center_loss + m.top_loss - m.train_loss) <=
          1e-6);
    CHECK(m.val_loss == m.train_loss);  // no scene left to hold out
  }
  CHECK(res.val_scenes.empty());
  REQUIRE(res.stepped_scenes.size() == 1);
  CHECK(res.stepped_scenes[0] == 0);
}

TEST_CASE("identical seeds give bitwise identical weights") {
  ObjectDB db = cup_db();
  TrainDataset data = small_dataset(db, 3, 5);

  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 0.005;
  cfg.seed = 21;
  cfg.augment = true;  // exercises the per-epoch augmentation seeding
  cfg.preprocess = tiny_preprocess();

  NetworkModel init = init_network<float>(tiny_net(2), 3);
  TrainResult a = train(cfg, data, init);
  TrainResult b = train(cfg, data, init);

  auto wa = snapshot(a.last), wb = snapshot(b.last);
  REQUIRE(wa.size() == wb.size());
  for (std::size_t t = 0; t < wa.size(); ++t) CHECK(wa[t] == wb[t]);
  for (std::size_t e = 0; e < a.metrics.size(); ++e) {
    CHECK(a.metrics[e].train_loss == b.metrics[e].train_loss);
    CHECK(a.metrics[e].val_loss == b.metrics[e].val_loss);
  }

  cfg.seed = 22;
  TrainResult c = train(cfg, data, init);
  CHECK(snapshot(c.last) != wa);
}

TEST_CASE("validation split, checkpoints, and the metrics log") {
  ObjectDB db;
  db.add(make_builtin_object(1, "cup"));
  db.add(make_builtin_object(2, "cylinder"));
  auto root = temp_dir("votepose_train_data");

  DatasetParams dp;
  dp.n_scenes = 12;
  dp.min_objects = 1;
  dp.max_objects = 2;
  dp.camera = test_cam_config();
  generate_dataset(root, db, dp, 31);
  TrainDataset data = load_train_dataset(root);
  REQUIRE(data.scenes.size() == 12);
  REQUIRE(data.ids[0] == "scene_0000");

  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.learning_rate = 0.005;
  cfg.seed = 13;
  cfg.augment = false;
  cfg.checkpoint_interval = 2;
  cfg.preprocess.layer_sizes = {1024, 256, 128, 64, 32};
  cfg.preprocess.k = 8;
  cfg.preprocess.k_normals = 10;
  cfg.out_dir = temp_dir("votepose_train_run");

  NetworkModel init = init_network<float>(tiny_net(data.objects.n_classes()), 17);
  TrainResult res = train(cfg, data, init);

  // 5% of 12 scenes rounds to one held-out scene; it never gets a step.
  REQUIRE(res.val_scenes.size() == 1);
  CHECK(res.stepped_scenes.size() == 11);
  for (std::size_t s : res.stepped_scenes) CHECK(s != res.val_scenes[0]);

  REQUIRE(res.metrics.size() == 4);
  double best = res.metrics[0].val_loss;
  for (const EpochMetrics& m : res.metrics) {
    CHECK(std::isfinite(m.val_loss));
    best = std::min(best, m.val_loss);
  }
  REQUIRE(res.best_epoch >= 1);
  CHECK(res.metrics[std::size_t(res.best_epoch - 1)].val_loss == best);

  // Files: per-interval snapshots, the best checkpoint, and the CSV.
  for (const char* name : {"best.apw1", "best.cfg", "epoch_0002.apw1",
                           "epoch_0002.cfg", "epoch_0004.apw1", "metrics.csv"})
    CHECK(std::filesystem::exists(cfg.out_dir / name));

  NetworkModel reloaded = load_weights<float>(cfg.out_dir / "best.apw1");
  CHECK(snapshot(reloaded) == snapshot(res.best));

  std::ifstream csv(cfg.out_dir / "metrics.csv");
  std::string line;
  REQUIRE(std::getline(csv, line));
  CHECK(line == "epoch,train_loss,val_loss,seg_loss,center_loss,top_loss");
  int rows = 0;
  while (std::getline(csv, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 4);

  std::filesystem::remove_all(root);
  std::filesystem::remove_all(cfg.out_dir);
}

TEST_CASE("a non-finite loss aborts naming the scene") {
  ObjectDB db = cup_db();
  TrainDataset data = small_dataset(db, 1, 42);

  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.seed = 3;
  cfg.augment = false;
  cfg.preprocess = tiny_preprocess();

  NetworkModel init = init_network<float>(tiny_net(2), 2);
  init.head_seg.layers[0].b[0] = std::numeric_limits<float>::quiet_NaN();

  bool threw = false;
  try {
    train(cfg, data, init);
  } catch (const DataError& e) {
    threw = true;
    CHECK(std::string(e.what()).find("scene_0") != std::string::npos);
    CHECK(std::string(e.what()).find("seed 3") != std::string::npos);
  }
  CHECK(threw);
}
