#include "votepose/detect.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "votepose/common.hpp"
#include "votepose/kdtree.hpp"

namespace votepose {

std::vector<VoteSet> collect_votes(const NetworkOutput& out) {
  std::vector<VoteSet> sets;
  if (out.n_classes < 2) throw ConfigError("output has no foreground classes");
  sets.resize(std::size_t(out.n_classes) - 1);
  for (int c = 1; c < out.n_classes; ++c) sets[c - 1].class_id = c;
  for (int i = 0; i < out.rows; ++i) {
    const float* logits = out.seg_logits.data() + std::size_t(i) * out.n_classes;
    int best = 0;
    for (int c = 1; c < out.n_classes; ++c)
      if (logits[c] > logits[best]) best = c;
    if (best == 0) continue;
    VoteSet& vs = sets[best - 1];
    const Vec3d& p = out.output_positions[i];
    const float* co = out.center_offsets.data() + std::size_t(i) * 3;
    const float* to = out.top_offsets.data() + std::size_t(i) * 3;
    vs.center_votes.emplace_back(p.x() + co[0], p.y() + co[1], p.z() + co[2]);
    vs.top_votes.emplace_back(p.x() + to[0], p.y() + to[1], p.z() + to[2]);
    vs.source_indices.push_back(i);
  }
  return sets;
}

std::vector<Cluster> nms_cluster(const std::vector<Vec3d>& votes,
                                 double threshold, int min_votes) {
  if (threshold <= 0) throw ConfigError("NMS threshold must be positive");
  const std::size_t n = votes.size();
  std::vector<Cluster> out;
  if (n == 0) return out;

  KdTree3 tree(votes);
  std::vector<int> counts(n);
  for (std::size_t i = 0; i < n; ++i)
    counts[i] = tree.count_within(votes[i], threshold);

  std::vector<int32_t> survivors;
  std::vector<int32_t> near;
  for (std::size_t i = 0; i < n; ++i) {
    tree.radius(votes[i], threshold, near);
    bool best = true;
    for (int32_t j : near) {
      if (std::size_t(j) == i) continue;
      if (counts[j] > counts[i] ||
          (counts[j] == counts[i] && std::size_t(j) < i)) {
        best = false;
        break;
      }
    }
    if (best) survivors.push_back(int32_t(i));
  }

  // Disjoint membership: nearest survivor within threshold; exact distance
  // ties go to the earlier survivor (strict < with ascending survivor order).
  std::vector<Vec3d> surv_pos(survivors.size());
  for (std::size_t s = 0; s < survivors.size(); ++s)
    surv_pos[s] = votes[survivors[s]];
  KdTree3 surv_tree(surv_pos);
  std::vector<std::vector<int32_t>> members(survivors.size());
  for (std::size_t i = 0; i < n; ++i) {
    surv_tree.radius(votes[i], threshold, near);
    int best_s = -1;
    double best_d = 0;
    for (int32_t s : near) {
      double d = (surv_pos[s] - votes[i]).norm();
      if (best_s < 0 || d < best_d) {
        best_d = d;
        best_s = s;
      }
    }
    if (best_s >= 0) members[best_s].push_back(int32_t(i));
  }

  for (std::size_t s = 0; s < survivors.size(); ++s) {
    if (int(members[s].size()) < min_votes) continue;
    out.push_back(Cluster{survivors[s], std::move(members[s])});
  }
  return out;
}

std::vector<Detection> detect(const NetworkOutput& out, const ObjectDB& db,
                              const DetectParams& params) {
  std::vector<Detection> dets;
  for (const VoteSet& vs : collect_votes(out)) {
    if (vs.center_votes.empty()) continue;
    const ObjectModel& model = db.at(vs.class_id);
    const double threshold = model.nms_threshold();
    std::size_t class_first = dets.size();
    std::size_t max_members = 0;
    for (const Cluster& cl : nms_cluster(vs.center_votes, threshold,
                                         params.min_votes)) {
      Detection det;
      det.class_id = vs.class_id;
      det.center = vs.center_votes[cl.center_index];

      // The members' top votes decide the direction: cluster them and take
      // the survivor with the most agreement.
      std::vector<Vec3d> tops(cl.member_indices.size());
      for (std::size_t i = 0; i < tops.size(); ++i)
        tops[i] = vs.top_votes[cl.member_indices[i]];
      std::vector<Cluster> top_clusters = nms_cluster(tops, threshold, 1);
      std::size_t best = 0;
      for (std::size_t i = 1; i < top_clusters.size(); ++i)
        if (top_clusters[i].member_indices.size() >
            top_clusters[best].member_indices.size())
          best = i;
      det.top = tops[top_clusters[best].center_index];

      det.member_indices.reserve(cl.member_indices.size());
      det.surface_points.reserve(cl.member_indices.size());
      for (int32_t m : cl.member_indices) {
        int32_t src = vs.source_indices[m];
        det.member_indices.push_back(src);
        // Vote minus its own center offset: the original scene point.
        det.surface_points.push_back(out.output_positions[src]);
      }
      max_members = std::max(max_members, det.member_indices.size());
      dets.push_back(std::move(det));
    }
    for (std::size_t i = class_first; i < dets.size(); ++i)
      dets[i].confidence =
          double(dets[i].member_indices.size()) / double(max_members);
  }
  return dets;
}

void save_detections(const std::filesystem::path& path,
                     const std::vector<Detection>& dets) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write detections file: " + path.string());
  out.precision(9);
  for (const auto& d : dets)
    out << d.class_id << ' ' << d.center.x() << ' ' << d.center.y() << ' '
        << d.center.z() << ' ' << d.top.x() << ' ' << d.top.y() << ' '
        << d.top.z() << ' ' << d.member_indices.size() << '\n';
  if (!out) throw DataError("failed writing detections file: " + path.string());
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open detections file: " + path.string());
  std::vector<Detection> dets;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    Detection d;
    std::size_t members;
    if (!(ss >> d.class_id >> d.center.x() >> d.center.y() >> d.center.z() >>
          d.top.x() >> d.top.y() >> d.top.z() >> members))
      throw DataError("bad detection line " + std::to_string(line_no) + " in " +
                      path.string());
    d.member_indices.resize(members, -1);  // counts survive, points do not
    dets.push_back(std::move(d));
  }
  return dets;
}

}  // namespace votepose
