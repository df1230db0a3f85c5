#include "votepose/pipeline.hpp"

#include <chrono>

namespace votepose {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

const std::array<std::string, 6>& stage_names() {
  static const std::array<std::string, 6> names = {
      "Loading point cloud", "Computing normals", "Computing neighbors",
      "Preparing model inputs", "Model processing", "Pose Estimation"};
  return names;
}

InferenceResult run_inference(const DepthImage& depth,
                              const CameraIntrinsics& cam,
                              const NetworkModel& model, const ObjectDB& db,
                              const InferenceParams& params) {
  InferenceResult res;

  PreprocessTimes pt;
  Preprocessed pre = preprocess(depth, cam, params.preprocess, params.seed, &pt);
  res.times.load = pt.load_s;
  res.times.normals = pt.normals_s;
  res.times.neighbors = pt.neighbors_s;

  auto t0 = std::chrono::steady_clock::now();
  std::vector<std::vector<Vec3d>> positions =
      gather_layer_positions(pre.cloud, pre.pyramid);
  res.times.prepare = seconds_since(t0);

  t0 = std::chrono::steady_clock::now();
  NetworkOutput out =
      forward(model, pre.cloud, pre.pyramid, std::move(positions));
  res.times.model = seconds_since(t0);

  res.output_points = out.output_positions;
  res.point_class.resize(std::size_t(out.rows), 0);
  for (int i = 0; i < out.rows; ++i) {
    const float* row = out.seg_logits.data() + std::size_t(i) * out.n_classes;
    res.point_class[std::size_t(i)] =
        int(std::max_element(row, row + out.n_classes) - row);
  }

  t0 = std::chrono::steady_clock::now();
  std::vector<Detection> dets = detect(out, db, params.detect);
  for (Detection& det : dets) {
    const ObjectModel& obj = db.at(det.class_id);
    ObjectEstimate est;
    try {
      est.pose = pose_from_detection(det);
    } catch (const DataError&) {
      continue;  // coincident center and top: no recoverable axis
    }
    if (params.six_dof_classes.count(det.class_id)) {
      SixDofParams sp = params.six_dof;
      sp.icp = params.icp;
      sp.tau_proj = params.tau_proj;
      est.six_dof = true;
      try {
        RefinementResult r = six_dof_search(det, obj, depth, cam, sp);
        est.pose = r.pose;
        est.overlap = r.overlap;
        est.projection_score = r.projection_score;
      } catch (const NoValidPoseError&) {
        est.valid = false;  // keep the direct 5-DoF pose, unscored
        est.projection_score =
            depth_projection_score(est.pose, obj, depth, cam, params.tau_proj);
      }
    } else {
      if (params.refine) {
        RefinementResult r =
            seg_icp(det.surface_points, obj, est.pose, params.icp);
        est.pose = r.pose;
        est.overlap = r.overlap;
      }
      est.projection_score =
          depth_projection_score(est.pose, obj, depth, cam, params.tau_proj);
    }
    est.detection = std::move(det);
    res.objects.push_back(std::move(est));
  }
  res.times.pose = seconds_since(t0);
  return res;
}

}  // namespace votepose
