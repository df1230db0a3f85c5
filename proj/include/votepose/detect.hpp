#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "votepose/geometry.hpp"
#include "votepose/network.hpp"
#include "votepose/object_model.hpp"

namespace votepose {

/// Per-class center/top votes: one entry per output point whose argmax
/// class is this (foreground) class. All arrays share length M.
struct VoteSet {
  int class_id = 0;
  std::vector<Vec3d> center_votes;     // position + center offset, mm
  std::vector<Vec3d> top_votes;        // position + top offset, mm
  std::vector<int32_t> source_indices; // into the network's output points
};

/// One clustered object: the surviving center vote, the agreed top point,
/// and the instance segmentation recovered from the member votes.
struct Detection {
  int class_id = 0;
  Vec3d center = Vec3d::Zero();
  Vec3d top = Vec3d::Zero();
  std::vector<int32_t> member_indices;  // into the network's output points
  std::vector<Vec3d> surface_points;    // member votes minus their offsets
  double confidence = 0;  // member count / class max in this scene
};

struct Cluster {
  int32_t center_index = -1;            // into the vote array
  std::vector<int32_t> member_indices;  // into the vote array
};

struct DetectParams {
  int min_votes = 15;
};

/// Splits the network output into per-foreground-class vote sets by argmax
/// over the segmentation logits. Background points vote nowhere. Returned
/// in class order; classes with no votes get an empty set.
std::vector<VoteSet> collect_votes(const NetworkOutput& out);

/// Neighbor-count non-maximum suppression. Each vote's count is the number
/// of votes within `threshold` (inclusive, itself included). A vote survives
/// iff no vote within threshold has a strictly greater count, or an equal
/// count with a lower index. Every vote within threshold of a survivor is
/// assigned to its nearest survivor (distance ties to the earlier survivor),
/// making member sets disjoint. Survivors with fewer than min_votes members
/// are dropped.
std::vector<Cluster> nms_cluster(const std::vector<Vec3d>& votes,
                                 double threshold, int min_votes);

/// Full detection: cluster each class's center votes with threshold = half
/// the shortest bounding-box side, then pick the top point the members agree
/// on most (NMS over their top votes, same threshold, most members wins).
std::vector<Detection> detect(const NetworkOutput& out, const ObjectDB& db,
                              const DetectParams& params = {});

// Line-oriented text: class_id, center xyz, top xyz, member count.
void save_detections(const std::filesystem::path& path,
                     const std::vector<Detection>& dets);
std::vector<Detection> load_detections(const std::filesystem::path& path);

}  // namespace votepose
