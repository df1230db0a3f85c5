#include "votepose/pose.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "votepose/common.hpp"
#include "votepose/render.hpp"

namespace votepose {

RigidTransform pose_from_detection(const Detection& det) {
  const Vec3d diff = det.center - det.top;
  if (diff.norm() <= 1e-6)
    throw DataError("degenerate orientation: detection center and top coincide");
  const Vec3d n = diff.normalized();
  // Standard basis vector least aligned with n is never parallel to it.
  int axis = 0;
  for (int d = 1; d < 3; ++d)
    if (std::abs(n[d]) < std::abs(n[axis])) axis = d;
  const Vec3d tangent = Vec3d::Unit(axis);
  const Vec3d y = tangent.cross(n).normalized();
  const Vec3d x = y.cross(n);  // unit: y and n are orthonormal
  RigidTransform pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = n;
  pose.translation = det.center;
  return pose;
}

namespace {

// Closed-form least-squares rigid alignment mapping src onto dst
// (Kabsch/SVD over the trimmed correspondence subset).
RigidTransform solve_rigid(const std::vector<Vec3d>& src,
                           const std::vector<Vec3d>& dst,
                           const std::vector<int32_t>& subset) {
  Vec3d cs = Vec3d::Zero(), cd = Vec3d::Zero();
  for (int32_t i : subset) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= double(subset.size());
  cd /= double(subset.size());
  Mat3d h = Mat3d::Zero();
  for (int32_t i : subset) h += (src[i] - cs) * (dst[i] - cd).transpose();
  Eigen::JacobiSVD<Mat3d> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3d u = svd.matrixU(), v = svd.matrixV();
  Mat3d d = Mat3d::Identity();
  if ((v * u.transpose()).determinant() < 0) d(2, 2) = -1;
  RigidTransform t;
  t.rotation = v * d * u.transpose();
  t.translation = cd - t.rotation * cs;
  return t;
}

}  // namespace

RefinementResult seg_icp(const std::vector<Vec3d>& segment,
                         const ObjectModel& model, const RigidTransform& init,
                         const IcpParams& params) {
  if (segment.empty()) throw ConfigError("ICP needs a non-empty segment");
  if (params.max_iters < 1) throw ConfigError("ICP needs max_iters >= 1");
  if (params.trim_fraction < 0 || params.trim_fraction >= 1)
    throw ConfigError("trim fraction must be in [0, 1)");
  const std::size_t n = segment.size();
  const std::size_t keep = std::max<std::size_t>(
      3, std::size_t(std::ceil(double(n) * (1.0 - params.trim_fraction))));

  RefinementResult res;
  RigidTransform obj_from_cam = init.inverse();
  std::vector<Vec3d> q(n), m(n);
  std::vector<double> d2(n);
  std::vector<int32_t> order(n);

  double prev_mse = 0;
  for (int iter = 0; iter < params.max_iters; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      q[i] = obj_from_cam.apply(segment[i]);
      int32_t nn = model.surface_tree.nearest(q[i], &d2[i]);
      m[i] = model.surface_points[nn];
    }
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    if (keep < n) {
      std::nth_element(order.begin(), order.begin() + keep, order.end(),
                       [&](int32_t a, int32_t b) { return d2[a] < d2[b]; });
      order.resize(keep);
    }

    double mse = 0;
    for (int32_t i : order) mse += d2[i];
    mse /= double(order.size());
    res.mse_history.push_back(mse);
    res.iterations = iter + 1;
    if (iter > 0 && std::abs(mse - prev_mse) < params.mse_change_tol) {
      res.converged = true;
      break;
    }
    prev_mse = mse;

    obj_from_cam = solve_rigid(q, m, order) * obj_from_cam;
  }

  res.pose = obj_from_cam.inverse();
  int inliers = 0;
  const double inl2 = params.inlier_dist * params.inlier_dist;
  for (std::size_t i = 0; i < n; ++i) {
    double dist2;
    model.surface_tree.nearest(obj_from_cam.apply(segment[i]), &dist2);
    if (dist2 <= inl2) ++inliers;
  }
  res.overlap = double(inliers) / double(n);
  return res;
}

RefinementResult classic_icp(const std::vector<Vec3d>& scene_points,
                             const ObjectModel& model, const RigidTransform& init,
                             const IcpParams& params) {
  return seg_icp(scene_points, model, init, params);
}

double depth_projection_score(const RigidTransform& pose, const ObjectModel& model,
                              const DepthImage& depth, const CameraIntrinsics& cam,
                              double tau_proj, bool* out_of_view) {
  if (out_of_view) *out_of_view = false;
  // Hidden-point removal: splatting the far side of the model through a
  // sparse buffer would leave pixels that legitimately disagree with any
  // observation, so points facing away from the camera are culled first.
  const bool have_normals =
      model.surface_normals.size() == model.surface_points.size();
  std::vector<Vec3d> cam_points;
  cam_points.reserve(model.surface_points.size());
  for (std::size_t i = 0; i < model.surface_points.size(); ++i) {
    Vec3d p = pose.apply(model.surface_points[i]);
    if (have_normals &&
        (pose.rotation * model.surface_normals[i]).dot(p) >= 0)
      continue;
    cam_points.push_back(p);
  }
  SplatResult splat = splat_points(cam_points, cam, depth.width, depth.height,
                                   depth.depth_scale);
  if (splat.in_view == 0) {
    if (out_of_view) *out_of_view = true;
    return 0.0;
  }
  // Rendered pixels without an observed measurement carry no evidence either
  // way and are left out of the fraction entirely; a projection with no
  // observed support scores 0.
  std::size_t supported = 0, matched = 0;
  for (std::size_t px = 0; px < splat.depth.values.size(); ++px) {
    if (splat.depth.values[px] == 0 || depth.values[px] == 0) continue;
    ++supported;
    double d_render = double(splat.depth.values[px]) * splat.depth.depth_scale;
    double d_obs = double(depth.values[px]) * depth.depth_scale;
    if (std::abs(d_render - d_obs) < tau_proj) ++matched;
  }
  return supported == 0 ? 0.0 : double(matched) / double(supported);
}

RefinementResult six_dof_search(const Detection& det, const ObjectModel& model,
                                const DepthImage& depth, const CameraIntrinsics& cam,
                                const SixDofParams& params,
                                std::vector<CandidateResult>* trace) {
  if (params.z_step_deg <= 0 || params.z_step_deg > 360)
    throw ConfigError("z-rotation step must be in (0, 360]");
  if (det.surface_points.empty())
    throw ConfigError("6 DoF search needs a detection with surface points");
  const RigidTransform base = pose_from_detection(det);
  const int n_steps = int(std::lround(360.0 / params.z_step_deg));
  const double max_axis_rad = deg2rad(params.axis_max_angle_deg);

  std::vector<CandidateResult> candidates;
  candidates.reserve(std::size_t(n_steps) * 2);
  for (int flip = 0; flip < 2; ++flip) {
    for (int i = 0; i < n_steps; ++i) {
      CandidateResult cand;
      cand.z_deg = params.z_step_deg * i;
      cand.flipped = flip == 1;
      candidates.push_back(cand);
    }
  }

  parallel_for(candidates.size(), [&](std::size_t ci) {
    CandidateResult& cand = candidates[ci];
    RigidTransform start = base * RigidTransform::rot_z(deg2rad(cand.z_deg));
    if (cand.flipped) start = start * RigidTransform::rot_x(M_PI);
    if (params.axis_filter) {
      Vec3d axis = start.rotation * model.symmetry_axis;
      if (angle_between(axis, params.axis_ref) > max_axis_rad) {
        cand.filtered = true;
        return;
      }
    }
    cand.refine = seg_icp(det.surface_points, model, start, params.icp);
    if (cand.refine.overlap < params.min_overlap) return;
    cand.kept = true;
    cand.score = depth_projection_score(cand.refine.pose, model, depth, cam,
                                        params.tau_proj);
    cand.refine.projection_score = cand.score;
  });

  int best = -1;
  double best_overlap = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const CandidateResult& cand = candidates[i];
    if (!cand.filtered) best_overlap = std::max(best_overlap, cand.refine.overlap);
    if (!cand.kept) continue;
    if (best < 0 || cand.score > candidates[best].score) best = int(i);
  }
  if (trace) *trace = candidates;
  if (best < 0) throw NoValidPoseError(best_overlap);
  return candidates[best].refine;
}

void save_poses(const std::filesystem::path& path,
                const std::vector<RigidTransform>& poses) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write pose file: " + path.string());
  out.precision(12);
  for (const auto& t : poses) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out << t.rotation(r, c) << ' ';
    out << t.translation.x() << ' ' << t.translation.y() << ' '
        << t.translation.z() << '\n';
  }
  if (!out) throw DataError("failed writing pose file: " + path.string());
}

std::vector<RigidTransform> load_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pose file: " + path.string());
  std::vector<RigidTransform> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    RigidTransform t;
    bool ok = true;
    for (int r = 0; r < 3 && ok; ++r)
      for (int c = 0; c < 3 && ok; ++c) ok = bool(ss >> t.rotation(r, c));
    for (int d = 0; d < 3 && ok; ++d) ok = bool(ss >> t.translation[d]);
    if (!ok)
      throw DataError("bad pose line " + std::to_string(line_no) + " in " +
                      path.string());
    poses.push_back(t);
  }
  return poses;
}

}  // namespace votepose
