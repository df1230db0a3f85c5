#include "votepose/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "votepose/weights_io.hpp"

namespace votepose {

TrainDataset load_train_dataset(const std::filesystem::path& root) {
  TrainDataset data;
  data.objects = load_object_db(root / "objects.txt");
  for (const auto& dir : list_scene_dirs(root)) {
    data.scenes.push_back(load_scene(dir));
    data.ids.push_back(dir.filename().string());
  }
  if (data.scenes.empty())
    throw DataError("no scene directories under " + root.string());
  return data;
}

// Fixed across epochs so cached un-augmented batches are bitwise identical
// to recomputing them.
uint64_t train_preprocess_seed(uint64_t master_seed, std::size_t scene_index) {
  return derive_seed(derive_seed(master_seed, 4), scene_index);
}

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ConfigError("epochs must be at least 1");
  if (!(cfg.learning_rate > 0))
    throw ConfigError("learning rate must be positive");
  if (!(cfg.val_fraction > 0 && cfg.val_fraction < 1))
    throw ConfigError("validation fraction must be in (0,1)");
  if (cfg.checkpoint_interval < 0)
    throw ConfigError("checkpoint interval must not be negative");
  if (!(cfg.class_weight_cap > 0))
    throw ConfigError("class weight cap must be positive");
}

std::vector<double> compute_class_weights(
    const TrainDataset& data, int n_classes, double cap,
    std::vector<int>* capped_out, const std::vector<std::size_t>* subset) {
  if (n_classes < 1) throw ConfigError("class count must be at least 1");
  if (!(cap > 0)) throw ConfigError("class weight cap must be positive");
  if (capped_out) capped_out->clear();

  std::vector<int64_t> counts(std::size_t(n_classes), 0);
  auto count_scene = [&](const SceneData& scene) {
    for (std::size_t p = 0; p < scene.depth.values.size(); ++p) {
      if (scene.depth.values[p] == 0) continue;  // never becomes a point
      const uint16_t id = scene.instance[p];
      int cls = 0;
      if (id != 0) {
        if (std::size_t(id) > scene.gts.size())
          throw DataError("instance id " + std::to_string(id) +
                          " has no ground-truth entry");
        cls = scene.gts[id - 1].class_id;
      }
      if (cls < 0 || cls >= n_classes)
        throw DataError("class id " + std::to_string(cls) +
                        " outside the configured " +
                        std::to_string(n_classes) + " classes");
      ++counts[std::size_t(cls)];
    }
  };
  if (subset) {
    for (std::size_t i : *subset) count_scene(data.scenes.at(i));
  } else {
    for (const SceneData& scene : data.scenes) count_scene(scene);
  }

  const int64_t total = std::accumulate(counts.begin(), counts.end(), int64_t(0));
  if (total == 0) throw DataError("no measured pixels to weight classes by");

  std::vector<double> weights(static_cast<std::size_t>(n_classes));
  for (int c = 0; c < n_classes; ++c) {
    if (counts[std::size_t(c)] == 0) {
      weights[std::size_t(c)] = cap;
      if (capped_out) capped_out->push_back(c);
      std::cerr << "warning: class " << c
                << " has no samples; weight capped at " << cap << "\n";
      continue;
    }
    const double w = double(total) /
                     (double(n_classes) * double(counts[std::size_t(c)]));
    weights[std::size_t(c)] = std::min(w, cap);
  }
  return weights;
}

namespace {

struct SceneBatch {
  Preprocessed pre;
  PointLabels labels;
};

// aug == nullptr runs the clean path. The augmented path replays the crop on
// the instance image and shifts ground-truth depths by the crop's z offset so
// labels keep matching the pixels they came from.
SceneBatch make_batch(const SceneData& scene, const ObjectDB& db,
                      const PreprocessParams& params, uint64_t pre_seed,
                      const AugmentationConfig* aug, uint64_t aug_seed) {
  SceneBatch batch;
  const int w = scene.depth.width;
  const int h = scene.depth.height;
  if (aug) {
    AugTrace trace;
    DepthImage depth = augment(scene.depth, *aug, aug_seed, &trace);
    std::vector<uint16_t> ids = replay_crop(scene.instance, w, h, trace);
    batch.pre = preprocess(depth, scene.camera.cam, params, pre_seed);
    batch.labels = label_points(batch.pre, ids, w, h, scene.gts, db,
                                Vec3d(0, 0, trace.z_offset));
  } else {
    batch.pre = preprocess(scene.depth, scene.camera.cam, params, pre_seed);
    batch.labels =
        label_points(batch.pre, scene.instance, w, h, scene.gts, db);
  }
  return batch;
}

void shuffle_indices(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.bounded(uint32_t(i))]);
}

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
  return out.str();
}

// APW1 checkpoint plus a sidecar snapshot of everything needed to rerun:
// training hyperparameters, preprocessing shape, and the network config in
// the same key-value dialect the weights file embeds.
void write_checkpoint(const std::filesystem::path& dir, const std::string& stem,
                      const NetworkModel& model, const TrainConfig& cfg,
                      int epoch, double val_loss) {
  save_weights(model, dir / (stem + ".apw1"));
  std::ofstream out(dir / (stem + ".cfg"));
  out << std::setprecision(17);
  out << "epoch " << epoch << "\n";
  out << "val_loss " << val_loss << "\n";
  out << "epochs " << cfg.epochs << "\n";
  out << "learning_rate " << cfg.learning_rate << "\n";
  out << "seed " << cfg.seed << "\n";
  out << "augment " << (cfg.augment ? 1 : 0) << "\n";
  out << "class_weight_cap " << cfg.class_weight_cap << "\n";
  out << "checkpoint_interval " << cfg.checkpoint_interval << "\n";
  out << "val_fraction " << cfg.val_fraction << "\n";
  out << "layer_sizes " << join_ints(cfg.preprocess.layer_sizes) << "\n";
  out << "k " << cfg.preprocess.k << "\n";
  out << "k_normals " << cfg.preprocess.k_normals << "\n";
  out << detail::encode_config(model.config);
  if (!out) throw DataError("cannot write checkpoint sidecar in " + dir.string());
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const TrainDataset& data,
                  const NetworkModel& init) {
  validate(cfg);
  const std::size_t n = data.scenes.size();
  if (n == 0) throw DataError("training dataset is empty");
  if (!data.ids.empty() && data.ids.size() != n)
    throw ConfigError("scene id list does not match scene count");
  const int nc = init.config.n_classes;
  if (data.objects.n_classes() > nc)
    throw ConfigError("network has fewer classes than the object set");

  auto scene_id = [&](std::size_t i) {
    return data.ids.empty() ? "scene_" + std::to_string(i) : data.ids[i];
  };

  // Seed-deterministic split: shuffle once, hold out the head. Never holds
  // out everything; an empty holdout mirrors the training loss instead.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t(0));
  Rng split_rng(derive_seed(cfg.seed, 0));
  shuffle_indices(order, split_rng);
  std::size_t n_val = std::size_t(std::lround(cfg.val_fraction * double(n)));
  if (n_val >= n) n_val = n - 1;
  std::vector<std::size_t> val(order.begin(), order.begin() + n_val);
  std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());
  std::sort(val.begin(), val.end());
  std::vector<bool> is_val(n, false);
  for (std::size_t v : val) is_val[v] = true;

  std::vector<double> weights =
      compute_class_weights(data, nc, cfg.class_weight_cap, nullptr, &train_idx);

  std::map<std::size_t, SceneBatch> cache;  // un-augmented batches
  auto plain_batch = [&](std::size_t i) -> const SceneBatch& {
    auto it = cache.find(i);
    if (it == cache.end())
      it = cache
               .emplace(i, make_batch(data.scenes[i], data.objects,
                                      cfg.preprocess, train_preprocess_seed(cfg.seed, i),
                                      nullptr, 0))
               .first;
    return it->second;
  };

  std::ofstream csv;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    csv.open(cfg.out_dir / "metrics.csv");
    if (!csv) throw DataError("cannot write metrics.csv in " + cfg.out_dir.string());
    csv << "epoch,train_loss,val_loss,seg_loss,center_loss,top_loss\n";
  }

  NetworkModel model = init;
  AdamState adam;
  AdamParams adam_params;
  adam_params.lr = cfg.learning_rate;

  TrainResult res;
  res.val_scenes = val;
  res.best = model;
  res.metrics.reserve(std::size_t(cfg.epochs));
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<bool> stepped(n, false);

  const uint64_t order_root = derive_seed(cfg.seed, 2);
  const uint64_t aug_root = derive_seed(cfg.seed, 3);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> sched = train_idx;
    Rng order_rng(derive_seed(order_root, uint64_t(epoch)));
    shuffle_indices(sched, order_rng);
    const uint64_t aug_epoch = derive_seed(aug_root, uint64_t(epoch));

    double loss_sum = 0;
    LossParts parts_sum;
    for (std::size_t i : sched) {
      if (is_val[i])
        throw InternalError("optimizer step scheduled on a validation scene");
      stepped[i] = true;

      const uint64_t aug_seed = derive_seed(aug_epoch, i);
      SceneBatch fresh;
      const SceneBatch* batch;
      if (cfg.augment) {
        fresh = make_batch(data.scenes[i], data.objects, cfg.preprocess,
                           train_preprocess_seed(cfg.seed, i), &cfg.augmentation,
                           aug_seed);
        batch = &fresh;
      } else {
        batch = &plain_batch(i);
      }

      ForwardTrace trace;
      NetworkOutput out =
          forward(model, batch->pre.cloud, batch->pre.pyramid, &trace);
      OutputGrads gout;
      LossParts parts;
      const double l = loss(out, batch->labels, weights, &gout, &parts);
      if (!std::isfinite(l)) {
        std::ostringstream msg;
        msg << "non-finite training loss at scene '" << scene_id(i)
            << "' (epoch " << epoch << ", master seed " << cfg.seed;
        if (cfg.augment) msg << ", augmentation seed " << aug_seed;
        msg << ")";
        throw DataError(msg.str());
      }
      NetworkGrads grads =
          backward(model, batch->pre.cloud, batch->pre.pyramid, trace, gout);
      adam_step(model, grads, adam, adam_params);

      loss_sum += l;
      parts_sum.seg += parts.seg;
      parts_sum.center += parts.center;
      parts_sum.top += parts.top;
    }

    EpochMetrics m;
    m.epoch = epoch;
    const double n_train = double(train_idx.size());
    m.train_loss = loss_sum / n_train;
    m.seg_loss = parts_sum.seg / n_train;
    m.center_loss = parts_sum.center / n_train;
    m.top_loss = parts_sum.top / n_train;

    if (val.empty()) {
      m.val_loss = m.train_loss;
    } else {
      double val_sum = 0;
      for (std::size_t v : val) {
        const SceneBatch& batch = plain_batch(v);
        NetworkOutput out = forward(model, batch.pre.cloud, batch.pre.pyramid);
        val_sum += loss(out, batch.labels, weights);
      }
      m.val_loss = val_sum / double(val.size());
    }
    res.metrics.push_back(m);

    if (csv.is_open()) {
      csv << std::setprecision(17) << m.epoch << "," << m.train_loss << ","
          << m.val_loss << "," << m.seg_loss << "," << m.center_loss << ","
          << m.top_loss << std::endl;
    }

    if (m.val_loss < best_val) {
      best_val = m.val_loss;
      res.best = model;
      res.best_epoch = epoch;
      if (!cfg.out_dir.empty())
        write_checkpoint(cfg.out_dir, "best", model, cfg, epoch, m.val_loss);
    }
    if (!cfg.out_dir.empty() && cfg.checkpoint_interval > 0 &&
        epoch % cfg.checkpoint_interval == 0) {
      char stem[32];
      std::snprintf(stem, sizeof stem, "epoch_%04d", epoch);
      write_checkpoint(cfg.out_dir, stem, model, cfg, epoch, m.val_loss);
    }
  }

  for (std::size_t v : val)
    if (stepped[v])
      throw InternalError("validation scene received an optimizer step");
  for (std::size_t i = 0; i < n; ++i)
    if (stepped[i]) res.stepped_scenes.push_back(i);
  res.last = std::move(model);
  return res;
}

}  // namespace votepose
