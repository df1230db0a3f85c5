#pragma once

#include <array>
#include <set>
#include <vector>

#include "votepose/detect.hpp"
#include "votepose/network.hpp"
#include "votepose/pose.hpp"
#include "votepose/pyramid.hpp"

namespace votepose {

/// Wall-clock seconds per inference stage, in execution order.
struct StageTimes {
  double load = 0;       // unprojection + base downsampling
  double normals = 0;    // normal estimation
  double neighbors = 0;  // pyramid neighbor search
  double prepare = 0;    // gathering per-layer model inputs
  double model = 0;      // network forward pass
  double pose = 0;       // voting, clustering, pose construction, refinement

  std::array<double, 6> as_array() const {
    return {load, normals, neighbors, prepare, model, pose};
  }
};

/// Stage labels matching StageTimes::as_array order.
const std::array<std::string, 6>& stage_names();

struct InferenceParams {
  PreprocessParams preprocess;
  DetectParams detect;
  IcpParams icp;
  bool refine = true;           // seg-ICP each detection's segment
  std::set<int> six_dof_classes;  // classes searched over the symmetry axis
  SixDofParams six_dof;         // icp/tau fields below override its copies
  double tau_proj = 10.0;
  uint64_t seed = 0;            // preprocessing downsample seed
};

struct ObjectEstimate {
  Detection detection;
  RigidTransform pose;  // camera-from-object
  double overlap = 0;   // segment fraction near the model after refinement
  double projection_score = 0;
  bool six_dof = false;  // pose came from the rotation search
  bool valid = true;     // false when no candidate passed the overlap gate
};

struct InferenceResult {
  std::vector<ObjectEstimate> objects;
  StageTimes times;
  // The network's output-layer points and their argmax classes (0 =
  // background), kept for visualization; member_indices index into these.
  std::vector<Vec3d> output_points;
  std::vector<int> point_class;
};

/// Full detection pipeline on one depth image: preprocess, forward, vote,
/// cluster, then per detection either the direct 5-DoF pose (optionally
/// seg-ICP refined) or, for classes listed in six_dof_classes, the full
/// rotation search. Detections whose center and top collapse are dropped. A
/// six-DoF search with no surviving candidate keeps the unrefined pose and
/// marks the estimate invalid.
InferenceResult run_inference(const DepthImage& depth,
                              const CameraIntrinsics& cam,
                              const NetworkModel& model, const ObjectDB& db,
                              const InferenceParams& params = {});

}  // namespace votepose
