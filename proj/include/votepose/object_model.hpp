#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "votepose/geometry.hpp"
#include "votepose/kdtree.hpp"

namespace votepose {

/// Triangle mesh in the object frame, millimeters.
struct TriMesh {
  std::vector<Vec3d> vertices;
  std::vector<std::array<int32_t, 3>> faces;

  double surface_area() const;
};

// ASCII OBJ: `v x y z` vertices and `f` faces (first index of any a/b/c
// groups; polygons fan-triangulated).
TriMesh load_obj(const std::filesystem::path& path);
void save_obj(const std::filesystem::path& path, const TriMesh& mesh);

// Parametric generators, all centered on the origin with the symmetry axis
// along +z. Dimensions in millimeters.
TriMesh make_cylinder_mesh(double radius, double height, int segments = 48);
TriMesh make_box_mesh(const Vec3d& extents);
TriMesh make_sphere_mesh(double radius, int rings = 24, int segments = 48);
// Open-topped cup: outer wall, inner wall, rim and bottom.
TriMesh make_cup_mesh(double radius, double height, double wall = 4.0,
                      int segments = 48);
// Cylinder with a rectangular groove cut along one side, breaking the
// rotational symmetry about z. notch_deg is the angular width of the groove.
TriMesh make_notched_cylinder_mesh(double radius, double height,
                                   double notch_deg = 60.0,
                                   double notch_depth = 15.0,
                                   int segments = 48);

/// Uniform-area random sampling of the mesh surface. density is points per
/// square millimeter; the sample count is round(area * density), at least 1.
/// When normals is given it receives one unit face normal per sample,
/// oriented by the face winding (counter-clockwise seen from outside).
std::vector<Vec3d> sample_surface(const TriMesh& mesh, double density,
                                  uint64_t seed,
                                  std::vector<Vec3d>* normals = nullptr);

/// A detectable object: its mesh, a dense surface sampling used for ICP and
/// projection scoring, and precomputed extent data.
struct ObjectModel {
  int class_id = 0;
  std::string name;
  TriMesh mesh;
  std::vector<Vec3d> surface_points;   // object frame, mm
  std::vector<Vec3d> surface_normals;  // unit, outward per face winding
  Vec3d bbox_min = Vec3d::Zero();
  Vec3d bbox_max = Vec3d::Zero();
  Vec3d bbox_center = Vec3d::Zero();
  Vec3d bbox_extents = Vec3d::Zero();
  Vec3d symmetry_axis = Vec3d::UnitZ();
  double diameter = 0;   // max pairwise vertex distance, mm
  KdTree3 surface_tree;  // over surface_points
  std::string source;    // manifest provenance: builtin:<name> or an OBJ path

  // Half the shortest bounding-box side: the clustering radius for votes.
  double nms_threshold() const { return 0.5 * bbox_extents.minCoeff(); }
};

inline constexpr double kDefaultSampleDensity = 0.25;  // 1 point per 4 mm^2

/// Builds a model from a mesh: samples the surface, computes the bounding
/// box from the vertices, the diameter as the max pairwise vertex distance,
/// and the search tree over the samples.
ObjectModel make_object_model(int class_id, const std::string& name, TriMesh mesh,
                              double density = kDefaultSampleDensity,
                              uint64_t seed = 0x0b9ec7ull);

/// Built-in parametric object by name: cup, cylinder, notched_cylinder,
/// box, sphere. Throws ConfigError for unknown names.
ObjectModel make_builtin_object(int class_id, const std::string& name,
                                double density = kDefaultSampleDensity);

/// Class-id keyed model registry. Class 0 is background and never present.
struct ObjectDB {
  std::map<int, ObjectModel> models;

  bool has(int class_id) const { return models.count(class_id) != 0; }
  const ObjectModel& at(int class_id) const;
  void add(ObjectModel model);
  // Classes are 1..N by convention; network class count is max id + 1.
  int n_classes() const;
};

// Manifest: one `class_id name source` line per object, where source is
// either builtin:<name> or an OBJ path relative to the manifest.
void save_object_manifest(const std::filesystem::path& path, const ObjectDB& db);
ObjectDB load_object_db(const std::filesystem::path& manifest,
                        double density = kDefaultSampleDensity);

}  // namespace votepose
