#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "votepose/depth_image.hpp"
#include "votepose/network.hpp"
#include "votepose/object_model.hpp"
#include "votepose/pyramid.hpp"
#include "votepose/render.hpp"

namespace votepose {

/// One object dropped into the bin.
struct Placement {
  int class_id = 0;
  RigidTransform world_from_object;
};

/// A bin scene. World frame: bin floor is z = 0, bin interior centered on
/// the origin spanning +-bin_extents.xy/2; the camera looks down at it.
struct Scene {
  std::vector<Placement> placements;
  Vec3d bin_extents = Vec3d(400, 300, 250);  // interior, mm
  RigidTransform world_from_camera;
};

struct SceneParams {
  Vec3d bin_extents = Vec3d(400, 300, 250);
  double camera_height = 800;       // floor to camera origin, mm
  double max_volume_overlap = 0.3;  // of the smaller bbox volume
  int max_attempts = 1000;          // total pose draws before giving up
};

/// Rejection-sampled resting placement: uniform yaw/pitch/roll, uniform xy
/// inside the bin, z stacked on whatever the bounding box overlaps in xy.
/// Classes drawn uniformly from the registry. Deterministic for a seed.
/// Throws DataError if max_attempts pose draws cannot place n_objects.
Scene generate_scene(const ObjectDB& db, int n_objects, uint64_t seed,
                     const SceneParams& params = {});

/// Z-buffer render of the scene: objects carry instance ids 1..n in
/// placement order, the bin floor and walls render as id 0.
RenderResult render_scene(const Scene& scene, const ObjectDB& db,
                          const CameraIntrinsics& cam, int width, int height,
                          double depth_scale = 1.0);

/// Per-object ground truth: camera-frame pose plus visibility, where
/// visibility = pixels the object won in the full render / pixels it covers
/// rendered alone.
struct SceneObjectGT {
  int class_id = 0;
  RigidTransform cam_from_object;
  double visibility = 0;
};

std::vector<SceneObjectGT> scene_ground_truth(const Scene& scene,
                                              const ObjectDB& db,
                                              const RenderResult& full,
                                              const CameraIntrinsics& cam);

/// Maps the pyramid's final (output) layer back to layer-0 indices by
/// composing the per-layer query selections.
std::vector<int32_t> output_to_base(const NeighborPyramid& pyramid);

/// Training labels for the network's output points: each point inherits the
/// instance id of its source pixel; offsets point from the point to the
/// object's bbox center and to center - half_extent * symmetry_axis (the
/// convention pose construction inverts). gt_shift is added to every
/// object's camera-frame position first (used to track depth augmentation).
PointLabels label_points(const Preprocessed& pre,
                         const std::vector<uint16_t>& instance, int width,
                         int height, const std::vector<SceneObjectGT>& gts,
                         const ObjectDB& db,
                         const Vec3d& gt_shift = Vec3d::Zero());

/// Camera-frame top point matching the label convention above.
Vec3d object_top_point(const ObjectModel& model, const RigidTransform& pose);

struct AugmentationConfig {
  double p_circles = 0.5;
  int min_circles = 1, max_circles = 8;
  double min_circle_radius = 2, max_circle_radius = 20;  // px

  double p_noise = 0.5;
  double noise_sigma = 2.0;  // mm, on nonzero pixels

  double p_blur = 0.5;  // box blur, kernel 3 or 5 chosen at random

  double p_crop = 0.5;
  double min_crop_fraction = 0.6;  // retained share of each xy dimension
  double z_offset_min = -100, z_offset_max = 100;  // mm, nonzero pixels

  double p_edges = 0.5;  // depth-edge removal
  double canny_sigma = 1.4;
  double canny_low = 0.1, canny_high = 0.3;  // of max gradient magnitude
};

/// What an augment() call actually did, enough to replay the geometric part
/// on the matching instance image and to shift GT depths.
struct AugTrace {
  bool circles = false, noise = false, blur = false, crop = false,
       edges = false;
  int crop_x0 = 0, crop_y0 = 0, crop_w = 0, crop_h = 0;
  double z_offset = 0;  // mm
};

/// Applies, in order and each with its configured probability: circle
/// cutouts, Gaussian depth noise, box blur, xy crop rescaled back to full
/// resolution plus a z offset, and Canny-style depth-edge removal. Never
/// creates depth where none existed. Deterministic for a seed.
DepthImage augment(const DepthImage& depth, const AugmentationConfig& cfg,
                   uint64_t seed, AugTrace* trace = nullptr);

/// Replays the crop remap recorded in trace on an instance-id image so the
/// pixel-to-object correspondence survives augmentation.
std::vector<uint16_t> replay_crop(const std::vector<uint16_t>& ids, int width,
                                  int height, const AugTrace& trace);

/// One scene on disk: depth.pgm, instance.pgm, camera.txt, gt.txt.
struct SceneData {
  DepthImage depth;
  std::vector<uint16_t> instance;
  CameraConfig camera;
  std::vector<SceneObjectGT> gts;
};

void save_scene(const std::filesystem::path& dir, const SceneData& data);
SceneData load_scene(const std::filesystem::path& dir);

struct DatasetParams {
  int n_scenes = 10;
  int min_objects = 3, max_objects = 6;
  SceneParams scene;
  CameraConfig camera;
};

/// Generates scene_0000.. directories under root plus an objects.txt
/// manifest. Scenes run in parallel with per-scene seeds derived from the
/// master seed; output is byte-identical for a given seed either way.
void generate_dataset(const std::filesystem::path& root, const ObjectDB& db,
                      const DatasetParams& params, uint64_t seed);

/// Scene directories under root, sorted by name.
std::vector<std::filesystem::path> list_scene_dirs(
    const std::filesystem::path& root);

}  // namespace votepose
