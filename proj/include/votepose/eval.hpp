#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "votepose/object_model.hpp"
#include "votepose/pipeline.hpp"
#include "votepose/synth.hpp"

namespace votepose {

// End-to-end wall-clock totals reported for this six-stage pipeline by the
// reference implementation on its own hardware (GPU model pass); kept as
// context to print beside locally measured numbers.
inline constexpr double kReferenceTotalSeconds5Dof = 0.245;
inline constexpr double kReferenceTotalSeconds6Dof = 2.68;

struct VsdParams {
  double tau = 20.0;    // mm, depth agreement tolerance
  double delta = 15.0;  // mm, visibility test tolerance
  double theta = 0.3;   // correctness threshold on the error
  double min_visibility = 0.1;  // ground truth below this is not scored
};

/// Throws ConfigError unless tau > 0, delta > 0, and theta is in (0,1).
void validate(const VsdParams& params);

/// Visible-surface discrepancy between two poses of the same model against
/// an observed depth image. Both poses are rendered; a rendered pixel counts
/// as visible when the observation there is missing or at most delta behind
/// it. Over the union of the two visibility masks, a pixel costs 0 when both
/// poses are visible and their rendered depths agree within tau, else 1; the
/// error is the mean cost. An empty union scores 1, and *off_image (when
/// given) reports whether neither pose touched the image at all.
double vsd_error(const RigidTransform& est, const RigidTransform& gt,
                 const ObjectModel& model, const DepthImage& depth,
                 const CameraIntrinsics& cam, const VsdParams& params = {},
                 bool* off_image = nullptr);

struct PoseEstimate {
  int scene = 0;  // index into the evaluated scene list
  int class_id = 0;
  RigidTransform cam_from_object;
  double score = 0;
  double time_s = 0;
};

// CSV interchange: scene_id, class_id, 9 row-major rotation values, 3
// translation values, score, time. Header row required.
void save_estimates(const std::filesystem::path& path,
                    const std::vector<PoseEstimate>& estimates);
std::vector<PoseEstimate> load_estimates(const std::filesystem::path& path);

struct TimingRow {
  std::string stage;
  double seconds = 0;     // median over measured runs
  double cumulative = 0;  // prefix sum of the medians
};

struct EvalReport {
  int gt_count = 0;        // ground truths above the visibility floor
  int estimate_count = 0;  // estimates that were scored
  int matched_correct = 0;
  double recall = 0;
  // NaN = undefined (no estimates / no matches); printed as n/a.
  double precision = std::nan("");
  double mean_vsd = std::nan("");
  std::map<int, double> class_recall;
  std::map<int, int> class_gt_count;
  std::vector<TimingRow> timing;  // filled by benchmark runs
};

/// Greedy per-scene matching by lowest error within each class, each ground
/// truth and estimate used at most once. Recall counts matches with error
/// below theta over ground truths at or above the visibility floor; matches
/// to ground truth below the floor are discarded from both precision and
/// recall. Throws DataError when an estimate references a scene outside the
/// list.
EvalReport evaluate(const std::vector<PoseEstimate>& estimates,
                    const std::vector<SceneData>& scenes, const ObjectDB& db,
                    const VsdParams& params = {});

std::string format_report(const EvalReport& report);
std::string report_csv(const EvalReport& report);

/// Runs the pipeline once unmeasured, then `runs` more times (at least 5),
/// and reports the per-stage median with a cumulative column.
std::vector<TimingRow> benchmark(const std::function<StageTimes()>& run,
                                 int runs = 5);

std::string format_timing(const std::vector<TimingRow>& rows);
std::string timing_csv(const std::vector<TimingRow>& rows);

}  // namespace votepose
