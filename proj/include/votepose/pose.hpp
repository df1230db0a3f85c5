#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "votepose/depth_image.hpp"
#include "votepose/detect.hpp"
#include "votepose/geometry.hpp"
#include "votepose/object_model.hpp"

namespace votepose {

struct IcpParams {
  int max_iters = 50;
  double mse_change_tol = 1e-4;  // mm^2, on the mean squared match distance
  double inlier_dist = 5.0;      // mm, for the overlap fraction
  double trim_fraction = 0.0;    // worst matches ignored by the solve
};

struct RefinementResult {
  RigidTransform pose;  // camera-from-object
  double overlap = 0;   // fraction of segment points near the model
  double projection_score = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> mse_history;  // mean squared match distance per iteration
};

/// 5 DoF pose from a detection. The object z-axis in camera frame is
/// n = normalize(center - top); the remaining columns come from the standard
/// basis vector least aligned with n: y = normalize(tangent x n),
/// x = y x n. Translation is the detection center.
/// Throws DataError when |center - top| <= 1e-6 mm.
RigidTransform pose_from_detection(const Detection& det);

/// Reversed ICP: the scene segment is pulled into the object frame by the
/// current inverse pose and matched against the model's surface samples;
/// the closed-form least-squares alignment updates the pose. Stops when the
/// mean squared match distance changes by less than mse_change_tol or after
/// max_iters. Inputs are never mutated.
RefinementResult seg_icp(const std::vector<Vec3d>& segment,
                         const ObjectModel& model, const RigidTransform& init,
                         const IcpParams& params = {});

/// Whole-scene variant for comparison: identical algorithm, fed every scene
/// point instead of an instance segment.
RefinementResult classic_icp(const std::vector<Vec3d>& scene_points,
                             const ObjectModel& model, const RigidTransform& init,
                             const IcpParams& params = {});

/// Fraction of the model's splatted pixels whose observed depth exists and
/// lies within tau_proj mm of the rendered depth. A projection entirely
/// outside the image scores 0 and sets *out_of_view.
double depth_projection_score(const RigidTransform& pose, const ObjectModel& model,
                              const DepthImage& depth, const CameraIntrinsics& cam,
                              double tau_proj = 10.0, bool* out_of_view = nullptr);

struct SixDofParams {
  IcpParams icp;
  double z_step_deg = 10.0;   // 36 rotations, x-flip doubles to 72
  double min_overlap = 0.80;  // post-refinement survival gate
  double tau_proj = 10.0;
  // Optional orientation gate applied before refinement: candidate object
  // z-axes farther than axis_max_angle_deg from axis_ref are skipped.
  bool axis_filter = false;
  Vec3d axis_ref = Vec3d::UnitZ();
  double axis_max_angle_deg = 180.0;
};

struct CandidateResult {
  double z_deg = 0;
  bool flipped = false;
  bool filtered = false;  // removed by the orientation gate, never refined
  RefinementResult refine;
  double score = 0;
  bool kept = false;  // passed the overlap gate
};

/// Thrown by six_dof_search when every candidate fails the overlap gate.
class NoValidPoseError : public std::runtime_error {
 public:
  explicit NoValidPoseError(double best_overlap)
      : std::runtime_error("no pose candidate reached the overlap gate (best " +
                           std::to_string(best_overlap) + ")"),
        best_overlap(best_overlap) {}
  double best_overlap = 0;
};

/// Full rotation search: the 5 DoF pose spun about the object z-axis in
/// z_step_deg increments, each with and without a 180-degree x-flip, every
/// candidate refined by seg_icp, overlap-gated, then ranked by
/// depth_projection_score. `trace`, when given, records all candidates.
RefinementResult six_dof_search(const Detection& det, const ObjectModel& model,
                                const DepthImage& depth, const CameraIntrinsics& cam,
                                const SixDofParams& params = {},
                                std::vector<CandidateResult>* trace = nullptr);

// One pose per line: 12 numbers, row-major rotation then translation.
void save_poses(const std::filesystem::path& path,
                const std::vector<RigidTransform>& poses);
std::vector<RigidTransform> load_poses(const std::filesystem::path& path);

}  // namespace votepose
