#include "votepose/eval.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "votepose/render.hpp"

namespace votepose {

void validate(const VsdParams& params) {
  if (!(params.tau > 0)) throw ConfigError("vsd tau must be positive");
  if (!(params.delta > 0)) throw ConfigError("vsd delta must be positive");
  if (!(params.theta > 0 && params.theta < 1))
    throw ConfigError("vsd theta must be in (0,1)");
  if (!(params.min_visibility >= 0 && params.min_visibility <= 1))
    throw ConfigError("visibility floor must be in [0,1]");
}

double vsd_error(const RigidTransform& est, const RigidTransform& gt,
                 const ObjectModel& model, const DepthImage& depth,
                 const CameraIntrinsics& cam, const VsdParams& params,
                 bool* off_image) {
  validate(params);
  if (off_image) *off_image = false;

  auto render_pose = [&](const RigidTransform& pose) {
    MeshInstance inst{&model.mesh, pose, 1};
    return render_meshes({&inst, 1}, cam, depth.width, depth.height,
                         depth.depth_scale);
  };
  RenderResult r_est = render_pose(est);
  RenderResult r_gt = render_pose(gt);

  // A rendered pixel is visible unless the observation proves something sits
  // in front of it; a missing measurement cannot prove occlusion.
  auto visible = [&](uint16_t rendered, uint16_t observed) {
    if (rendered == 0) return false;
    if (observed == 0) return true;
    return double(rendered) * depth.depth_scale <=
           double(observed) * depth.depth_scale + params.delta;
  };

  std::size_t est_pixels = 0, gt_pixels = 0;
  std::size_t union_n = 0, cost = 0;
  for (std::size_t p = 0; p < depth.values.size(); ++p) {
    const uint16_t de = r_est.depth.values[p];
    const uint16_t dg = r_gt.depth.values[p];
    if (de != 0) ++est_pixels;
    if (dg != 0) ++gt_pixels;
    const bool ve = visible(de, depth.values[p]);
    const bool vg = visible(dg, depth.values[p]);
    if (!ve && !vg) continue;
    ++union_n;
    const bool agree =
        ve && vg &&
        std::abs(double(de) - double(dg)) * depth.depth_scale < params.tau;
    if (!agree) ++cost;
  }
  if (off_image) *off_image = est_pixels == 0 && gt_pixels == 0;
  if (union_n == 0) return 1.0;
  return double(cost) / double(union_n);
}

void save_estimates(const std::filesystem::path& path,
                    const std::vector<PoseEstimate>& estimates) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write estimates file: " + path.string());
  out << "scene_id,class_id,r11,r12,r13,r21,r22,r23,r31,r32,r33,"
         "tx,ty,tz,score,time\n";
  out << std::setprecision(17);
  for (const PoseEstimate& e : estimates) {
    out << e.scene << "," << e.class_id;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) out << "," << e.cam_from_object.rotation(r, c);
    for (int d = 0; d < 3; ++d) out << "," << e.cam_from_object.translation[d];
    out << "," << e.score << "," << e.time_s << "\n";
  }
  if (!out) throw DataError("cannot write estimates file: " + path.string());
}

std::vector<PoseEstimate> load_estimates(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open estimates file: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("scene_id,", 0) != 0)
    throw DataError("estimates file is missing its header: " + path.string());
  std::vector<PoseEstimate> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<double> fields;
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        fields.push_back(std::stod(cell));
      } catch (const std::exception&) {
        fields.clear();
        break;
      }
    }
    if (fields.size() != 16)
      throw DataError("estimates line " + std::to_string(line_no) +
                      " is malformed: " + path.string());
    PoseEstimate e;
    e.scene = int(fields[0]);
    e.class_id = int(fields[1]);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        e.cam_from_object.rotation(r, c) = fields[2 + 3 * r + c];
    for (int d = 0; d < 3; ++d)
      e.cam_from_object.translation[d] = fields[11 + d];
    e.score = fields[14];
    e.time_s = fields[15];
    out.push_back(e);
  }
  return out;
}

EvalReport evaluate(const std::vector<PoseEstimate>& estimates,
                    const std::vector<SceneData>& scenes, const ObjectDB& db,
                    const VsdParams& params) {
  validate(params);
  for (const PoseEstimate& e : estimates) {
    if (e.scene < 0 || std::size_t(e.scene) >= scenes.size())
      throw DataError("estimate references scene " + std::to_string(e.scene) +
                      " outside the " + std::to_string(scenes.size()) +
                      " provided");
    // Checked up front so the per-scene loop below stays throw-free.
    if (!db.has(e.class_id))
      throw DataError("no object model for class " +
                      std::to_string(e.class_id));
  }

  struct SceneTally {
    int gt_count = 0;
    int matched_correct = 0;
    int ignored_estimates = 0;  // matched to below-floor ground truth
    int correct_estimates = 0;
    double vsd_sum = 0;
    int vsd_n = 0;
    std::map<int, int> class_gt, class_correct;
  };
  std::vector<std::vector<const PoseEstimate*>> by_scene(scenes.size());
  for (const PoseEstimate& e : estimates) by_scene[std::size_t(e.scene)].push_back(&e);

  std::vector<SceneTally> tallies(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t s) {
    const SceneData& scene = scenes[s];
    SceneTally& tally = tallies[s];
    for (const SceneObjectGT& gt : scene.gts) {
      if (gt.visibility < params.min_visibility) continue;
      ++tally.gt_count;
      ++tally.class_gt[gt.class_id];
    }

    // All same-class pairs, cheapest error first, both sides used once.
    struct Pair {
      double e;
      std::size_t est, gt;
    };
    std::vector<Pair> pairs;
    const auto& ests = by_scene[s];
    for (std::size_t i = 0; i < ests.size(); ++i) {
      for (std::size_t g = 0; g < scene.gts.size(); ++g) {
        const SceneObjectGT& gt = scene.gts[g];
        if (gt.class_id != ests[i]->class_id) continue;
        const double e =
            vsd_error(ests[i]->cam_from_object, gt.cam_from_object,
                      db.at(gt.class_id), scene.depth, scene.camera.cam, params);
        pairs.push_back({e, i, g});
      }
    }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair& a, const Pair& b) { return a.e < b.e; });
    std::vector<bool> est_used(ests.size(), false), gt_used(scene.gts.size(), false);
    for (const Pair& p : pairs) {
      if (est_used[p.est] || gt_used[p.gt]) continue;
      est_used[p.est] = true;
      gt_used[p.gt] = true;
      const SceneObjectGT& gt = scene.gts[p.gt];
      if (gt.visibility < params.min_visibility) {
        ++tally.ignored_estimates;  // unscorable ground truth: discard both
        continue;
      }
      tally.vsd_sum += p.e;
      ++tally.vsd_n;
      if (p.e < params.theta) {
        ++tally.matched_correct;
        ++tally.correct_estimates;
        ++tally.class_correct[gt.class_id];
      }
    }
  });

  EvalReport report;
  int scored_estimates = int(estimates.size());
  double vsd_sum = 0;
  int vsd_n = 0, correct = 0;
  std::map<int, int> class_gt, class_correct;
  for (const SceneTally& t : tallies) {
    report.gt_count += t.gt_count;
    report.matched_correct += t.matched_correct;
    scored_estimates -= t.ignored_estimates;
    correct += t.correct_estimates;
    vsd_sum += t.vsd_sum;
    vsd_n += t.vsd_n;
    for (auto& [c, n] : t.class_gt) class_gt[c] += n;
    for (auto& [c, n] : t.class_correct) class_correct[c] += n;
  }
  report.estimate_count = scored_estimates;
  report.recall =
      report.gt_count == 0 ? 0.0
                           : double(report.matched_correct) / report.gt_count;
  if (scored_estimates > 0)
    report.precision = double(correct) / scored_estimates;
  if (vsd_n > 0) report.mean_vsd = vsd_sum / vsd_n;
  report.class_gt_count = class_gt;
  for (auto& [c, n] : class_gt)
    report.class_recall[c] = n == 0 ? 0.0 : double(class_correct[c]) / n;
  return report;
}

namespace {

std::string num_or_na(double v, int precision = 4) {
  if (std::isnan(v)) return "n/a";
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

}  // namespace

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  out << "ground truths  " << report.gt_count << "\n";
  out << "estimates      " << report.estimate_count << "\n";
  out << "correct        " << report.matched_correct << "\n";
  out << "recall         " << num_or_na(report.recall) << "\n";
  out << "precision      " << num_or_na(report.precision) << "\n";
  out << "mean error     " << num_or_na(report.mean_vsd) << "\n";
  for (auto& [c, r] : report.class_recall)
    out << "class " << std::setw(3) << c << " recall " << num_or_na(r) << " ("
        << report.class_gt_count.at(c) << " ground truths)\n";
  return out.str();
}

std::string report_csv(const EvalReport& report) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "key,value\n";
  out << "gt_count," << report.gt_count << "\n";
  out << "estimate_count," << report.estimate_count << "\n";
  out << "matched_correct," << report.matched_correct << "\n";
  out << "recall," << report.recall << "\n";
  out << "precision," << num_or_na(report.precision, 17) << "\n";
  out << "mean_vsd," << num_or_na(report.mean_vsd, 17) << "\n";
  for (auto& [c, r] : report.class_recall)
    out << "class_" << c << "_recall," << r << "\n";
  return out.str();
}

std::vector<TimingRow> benchmark(const std::function<StageTimes()>& run,
                                 int runs) {
  if (runs < 5) throw ConfigError("benchmark needs at least 5 measured runs");
  run();  // warm-up, excluded from the statistics
  std::array<std::vector<double>, 6> samples;
  for (int r = 0; r < runs; ++r) {
    const std::array<double, 6> t = run().as_array();
    for (std::size_t s = 0; s < 6; ++s) samples[s].push_back(t[s]);
  }
  std::vector<TimingRow> rows(6);
  double cumulative = 0;
  for (std::size_t s = 0; s < 6; ++s) {
    std::sort(samples[s].begin(), samples[s].end());
    const std::size_t n = samples[s].size();
    const double median = n % 2 ? samples[s][n / 2]
                                : 0.5 * (samples[s][n / 2 - 1] + samples[s][n / 2]);
    cumulative += median;
    rows[s] = {stage_names()[s], median, cumulative};
  }
  return rows;
}

std::string format_timing(const std::vector<TimingRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(24) << "stage" << std::right << std::setw(12)
      << "seconds" << std::setw(12) << "cumulative" << "\n";
  out << std::fixed << std::setprecision(4);
  for (const TimingRow& row : rows)
    out << std::left << std::setw(24) << row.stage << std::right
        << std::setw(12) << row.seconds << std::setw(12) << row.cumulative
        << "\n";
  return out.str();
}

std::string timing_csv(const std::vector<TimingRow>& rows) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "stage,seconds,cumulative\n";
  for (const TimingRow& row : rows)
    out << row.stage << "," << row.seconds << "," << row.cumulative << "\n";
  return out.str();
}

}  // namespace votepose
