#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "votepose/network.hpp"
#include "votepose/object_model.hpp"
#include "votepose/pyramid.hpp"
#include "votepose/synth.hpp"

namespace votepose {

/// Scene set plus the objects appearing in it. ids name scenes in
/// diagnostics and default to scene_<index> when empty.
struct TrainDataset {
  std::vector<SceneData> scenes;
  std::vector<std::string> ids;  // parallel to scenes, or empty
  ObjectDB objects;
};

/// Loads objects.txt and every scene_* directory under root.
TrainDataset load_train_dataset(const std::filesystem::path& root);

struct TrainConfig {
  int epochs = 100;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  bool augment = true;
  AugmentationConfig augmentation;
  double class_weight_cap = 1000.0;  // weight given to classes with no samples
  int checkpoint_interval = 0;       // epochs between snapshots; 0 = best only
  double val_fraction = 0.05;
  PreprocessParams preprocess;
  std::filesystem::path out_dir;  // checkpoints + metrics.csv; empty = none
};

/// Throws ConfigError on out-of-range fields (epochs < 1, fraction
/// outside (0,1), non-positive rate or cap).
void validate(const TrainConfig& cfg);

/// Sampling seed used for scene `scene_index` every time it is preprocessed
/// during training under `master_seed`. Running inference with this seed
/// reproduces the exact point cloud the model saw for that scene, which is
/// how to probe a trained model on its own inputs.
uint64_t train_preprocess_seed(uint64_t master_seed, std::size_t scene_index);

/// Inverse-number-of-samples weights over measured pixels:
///   w_c = T / (C * n_c)
/// with n_c the class's pixel count, C the class count, and T the total, so
/// that the weighted totals of all classes match. Measured pixels are the
/// population the network's points are drawn from, which makes pixel
/// frequencies stand in for label frequencies. A class that never occurs
/// gets `cap` and a stderr warning; capped_out (when given) collects those
/// ids. subset restricts counting to the listed scene indices.
std::vector<double> compute_class_weights(
    const TrainDataset& data, int n_classes, double cap,
    std::vector<int>* capped_out = nullptr,
    const std::vector<std::size_t>* subset = nullptr);

struct EpochMetrics {
  int epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;
  // Decomposition of train_loss; the three parts sum to it (up to rounding).
  double seg_loss = 0;
  double center_loss = 0;
  double top_loss = 0;
};

struct TrainResult {
  NetworkModel best;  // weights at the lowest validation loss
  NetworkModel last;  // weights after the final epoch
  std::vector<EpochMetrics> metrics;
  int best_epoch = 0;                       // 1-based
  std::vector<std::size_t> val_scenes;      // dataset indices held out
  std::vector<std::size_t> stepped_scenes;  // indices that produced steps
};

/// Optimization loop, one Adam step per scene. Each epoch shuffles the
/// training split, runs augment (when enabled) -> label -> preprocess ->
/// forward -> loss -> backward -> step per scene, then measures validation
/// loss on the held-out split without augmentation. The split is a
/// seed-deterministic shuffle holding out round(val_fraction * n) scenes
/// (never all of them); validation scenes never receive optimizer steps.
/// With no held-out scene the validation column mirrors the training loss.
///
/// Class weights come from the training split only. When augmentation is
/// off, preprocessing and labels are computed once per scene and reused;
/// per-scene preprocessing seeds are fixed across epochs, so the cached and
/// recomputed paths are bit-identical. Fixed seed means a bit-identical
/// weight trajectory.
///
/// Writes metrics.csv plus best/periodic APW1 checkpoints (each with a
/// UTF-8 sidecar snapshot) under out_dir when set. Throws DataError naming
/// the scene and seeds if a loss turns non-finite.
TrainResult train(const TrainConfig& cfg, const TrainDataset& data,
                  const NetworkModel& init);

}  // namespace votepose
