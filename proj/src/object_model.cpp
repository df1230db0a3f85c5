#include "votepose/object_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "votepose/common.hpp"

namespace votepose {

namespace {

double triangle_area(const Vec3d& a, const Vec3d& b, const Vec3d& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

// Cross-section prism: polygon points (x, y) extruded from -h/2 to +h/2,
// side quads split into triangles, caps fan-triangulated from the centroid.
// The polygon must be star-shaped around the origin.
TriMesh extrude_polygon(const std::vector<std::array<double, 2>>& poly,
                        double height) {
  const int n = int(poly.size());
  const double h2 = height * 0.5;
  TriMesh mesh;
  mesh.vertices.reserve(std::size_t(n) * 2 + 2);
  for (const auto& p : poly) mesh.vertices.emplace_back(p[0], p[1], -h2);
  for (const auto& p : poly) mesh.vertices.emplace_back(p[0], p[1], h2);
  const int32_t bottom_c = int32_t(mesh.vertices.size());
  mesh.vertices.emplace_back(0, 0, -h2);
  const int32_t top_c = int32_t(mesh.vertices.size());
  mesh.vertices.emplace_back(0, 0, h2);
  for (int i = 0; i < n; ++i) {
    const int32_t a = i, b = (i + 1) % n;
    mesh.faces.push_back({a, b, int32_t(n) + a});
    mesh.faces.push_back({b, int32_t(n) + b, int32_t(n) + a});
    mesh.faces.push_back({bottom_c, b, a});
    mesh.faces.push_back({top_c, int32_t(n) + a, int32_t(n) + b});
  }
  return mesh;
}

}  // namespace

double TriMesh::surface_area() const {
  double area = 0;
  for (const auto& f : faces)
    area += triangle_area(vertices[f[0]], vertices[f[1]], vertices[f[2]]);
  return area;
}

TriMesh load_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open OBJ file: " + path.string());
  TriMesh mesh;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag)) continue;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z))
        throw DataError("bad vertex on line " + std::to_string(line_no) + " of " +
                        path.string());
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<int32_t> idx;
      std::string tok;
      while (ss >> tok) {
        // a, a/b, a//c, a/b/c all reduce to the leading vertex index.
        long v = std::strtol(tok.c_str(), nullptr, 10);
        if (v == 0)
          throw DataError("bad face index on line " + std::to_string(line_no) +
                          " of " + path.string());
        if (v < 0) v += long(mesh.vertices.size()) + 1;
        if (v < 1 || v > long(mesh.vertices.size()))
          throw DataError("face index out of range on line " +
                          std::to_string(line_no) + " of " + path.string());
        idx.push_back(int32_t(v - 1));
      }
      if (idx.size() < 3)
        throw DataError("face with fewer than 3 vertices on line " +
                        std::to_string(line_no) + " of " + path.string());
      for (std::size_t i = 2; i < idx.size(); ++i)
        mesh.faces.push_back({idx[0], idx[i - 1], idx[i]});
    }
    // Other tags (vn, vt, comments, groups) are ignored.
  }
  if (mesh.vertices.empty()) throw DataError("OBJ has no vertices: " + path.string());
  return mesh;
}

void save_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write OBJ file: " + path.string());
  out.precision(9);
  for (const auto& v : mesh.vertices)
    out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw DataError("failed writing OBJ file: " + path.string());
}

TriMesh make_cylinder_mesh(double radius, double height, int segments) {
  if (radius <= 0 || height <= 0 || segments < 3)
    throw ConfigError("cylinder needs positive radius/height and >= 3 segments");
  std::vector<std::array<double, 2>> poly(static_cast<std::size_t>(segments));
  for (int i = 0; i < segments; ++i) {
    double a = 2.0 * M_PI * i / segments;
    poly[i] = {radius * std::cos(a), radius * std::sin(a)};
  }
  return extrude_polygon(poly, height);
}

TriMesh make_box_mesh(const Vec3d& extents) {
  if (extents.minCoeff() <= 0) throw ConfigError("box extents must be positive");
  const Vec3d h = extents * 0.5;
  TriMesh mesh;
  for (int i = 0; i < 8; ++i)
    mesh.vertices.emplace_back(i & 1 ? h.x() : -h.x(), i & 2 ? h.y() : -h.y(),
                               i & 4 ? h.z() : -h.z());
  const int32_t quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                               {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    mesh.faces.push_back({q[0], q[1], q[2]});
    mesh.faces.push_back({q[0], q[2], q[3]});
  }
  return mesh;
}

TriMesh make_sphere_mesh(double radius, int rings, int segments) {
  if (radius <= 0 || rings < 2 || segments < 3)
    throw ConfigError("sphere needs positive radius, >= 2 rings, >= 3 segments");
  TriMesh mesh;
  mesh.vertices.emplace_back(0, 0, radius);
  for (int r = 1; r < rings; ++r) {
    double phi = M_PI * r / rings;
    for (int s = 0; s < segments; ++s) {
      double th = 2.0 * M_PI * s / segments;
      mesh.vertices.emplace_back(radius * std::sin(phi) * std::cos(th),
                                 radius * std::sin(phi) * std::sin(th),
                                 radius * std::cos(phi));
    }
  }
  mesh.vertices.emplace_back(0, 0, -radius);
  const int32_t south = int32_t(mesh.vertices.size()) - 1;
  auto ring_vert = [&](int r, int s) {
    return int32_t(1 + (r - 1) * segments + (s % segments));
  };
  for (int s = 0; s < segments; ++s)
    mesh.faces.push_back({0, ring_vert(1, s), ring_vert(1, s + 1)});
  for (int r = 1; r < rings - 1; ++r)
    for (int s = 0; s < segments; ++s) {
      mesh.faces.push_back({ring_vert(r, s), ring_vert(r + 1, s), ring_vert(r + 1, s + 1)});
      mesh.faces.push_back({ring_vert(r, s), ring_vert(r + 1, s + 1), ring_vert(r, s + 1)});
    }
  for (int s = 0; s < segments; ++s)
    mesh.faces.push_back({south, ring_vert(rings - 1, s + 1), ring_vert(rings - 1, s)});
  return mesh;
}

TriMesh make_cup_mesh(double radius, double height, double wall, int segments) {
  if (radius <= 0 || height <= 0 || segments < 3)
    throw ConfigError("cup needs positive radius/height and >= 3 segments");
  if (wall <= 0 || wall >= radius || wall >= height)
    throw ConfigError("cup wall must be positive and thinner than the cup");
  const double h2 = height * 0.5;
  const double ri = radius - wall;
  const double zi = -h2 + wall;  // inner floor height
  TriMesh mesh;
  const int n = segments;
  // Rings: 0 outer bottom, 1 outer top, 2 inner top, 3 inner floor.
  for (int ring = 0; ring < 4; ++ring) {
    double r = ring < 2 ? radius : ri;
    double z = ring == 0 ? -h2 : ring == 3 ? zi : h2;
    if (ring == 2) z = h2;
    for (int s = 0; s < n; ++s) {
      double a = 2.0 * M_PI * s / n;
      mesh.vertices.emplace_back(r * std::cos(a), r * std::sin(a), z);
    }
  }
  const int32_t bottom_c = int32_t(mesh.vertices.size());
  mesh.vertices.emplace_back(0, 0, -h2);
  const int32_t floor_c = int32_t(mesh.vertices.size());
  mesh.vertices.emplace_back(0, 0, zi);
  auto rv = [n](int ring, int s) { return int32_t(ring * n + (s % n)); };
  for (int s = 0; s < n; ++s) {
    // Outer wall, rim annulus, inner wall.
    mesh.faces.push_back({rv(0, s), rv(0, s + 1), rv(1, s)});
    mesh.faces.push_back({rv(0, s + 1), rv(1, s + 1), rv(1, s)});
    mesh.faces.push_back({rv(1, s), rv(1, s + 1), rv(2, s)});
    mesh.faces.push_back({rv(1, s + 1), rv(2, s + 1), rv(2, s)});
    mesh.faces.push_back({rv(2, s), rv(2, s + 1), rv(3, s)});
    mesh.faces.push_back({rv(2, s + 1), rv(3, s + 1), rv(3, s)});
    // Outside bottom disc and inside floor disc.
    mesh.faces.push_back({bottom_c, rv(0, s + 1), rv(0, s)});
    mesh.faces.push_back({floor_c, rv(3, s), rv(3, s + 1)});
  }
  return mesh;
}

TriMesh make_notched_cylinder_mesh(double radius, double height, double notch_deg,
                                   double notch_depth, int segments) {
  if (radius <= 0 || height <= 0 || segments < 8)
    throw ConfigError("notched cylinder needs positive size and >= 8 segments");
  if (notch_depth <= 0 || notch_depth >= radius)
    throw ConfigError("notch depth must be positive and less than the radius");
  if (notch_deg <= 0 || notch_deg >= 180)
    throw ConfigError("notch width must be in (0, 180) degrees");
  const double half = deg2rad(notch_deg) * 0.5;  // groove centered on +x
  const double rn = radius - notch_depth;
  const double step = 2.0 * M_PI / segments;
  std::vector<std::array<double, 2>> poly;
  auto push = [&poly](double r, double a) {
    poly.push_back({r * std::cos(a), r * std::sin(a)});
  };
  auto near_corner = [&](double a) {
    return std::abs(a + half) < 1e-12 || std::abs(a - half) < 1e-12 ||
           std::abs(a - (2.0 * M_PI - half)) < 1e-12;
  };
  // Walk counterclockwise from the groove entry. The two sharp steps at
  // +-half get explicit corner pairs; regular grid angles fill the arcs.
  push(radius, -half);
  push(rn, -half);
  bool stepped_out = false;
  const int k0 = int(std::ceil(-half / step)) - 1;
  const int k1 = int(std::floor((2.0 * M_PI - half) / step)) + 1;
  for (int k = k0; k <= k1; ++k) {
    double a = k * step;
    if (a <= -half || a >= 2.0 * M_PI - half || near_corner(a)) continue;
    if (a < half) {
      push(rn, a);
    } else {
      if (!stepped_out) {
        push(rn, half);
        push(radius, half);
        stepped_out = true;
      }
      push(radius, a);
    }
  }
  if (!stepped_out) {
    push(rn, half);
    push(radius, half);
  }
  return extrude_polygon(poly, height);
}

std::vector<Vec3d> sample_surface(const TriMesh& mesh, double density,
                                  uint64_t seed, std::vector<Vec3d>* normals) {
  if (density <= 0) throw ConfigError("sample density must be positive");
  if (mesh.faces.empty()) throw ConfigError("cannot sample an empty mesh");
  std::vector<double> cum(mesh.faces.size());
  double area = 0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    const auto& f = mesh.faces[i];
    area += triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]],
                          mesh.vertices[f[2]]);
    cum[i] = area;
  }
  if (area <= 0) throw ConfigError("mesh has zero surface area");
  const std::size_t count = std::max<std::size_t>(1, std::size_t(std::llround(area * density)));
  std::vector<Vec3d> out(count);
  if (normals) normals->resize(count);
  Rng rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    double u = rng.uniform() * area;
    std::size_t fi = std::size_t(
        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (fi >= mesh.faces.size()) fi = mesh.faces.size() - 1;
    const auto& f = mesh.faces[fi];
    // sqrt trick gives a uniform density over the triangle.
    double s = std::sqrt(rng.uniform());
    double t = rng.uniform();
    out[i] = (1.0 - s) * mesh.vertices[f[0]] +
             s * (1.0 - t) * mesh.vertices[f[1]] + s * t * mesh.vertices[f[2]];
    if (normals) {
      Vec3d n = (mesh.vertices[f[1]] - mesh.vertices[f[0]])
                    .cross(mesh.vertices[f[2]] - mesh.vertices[f[0]]);
      double len = n.norm();
      // Area-weighted face choice never lands on a degenerate triangle.
      (*normals)[i] = n / len;
    }
  }
  return out;
}

ObjectModel make_object_model(int class_id, const std::string& name, TriMesh mesh,
                              double density, uint64_t seed) {
  if (class_id < 1) throw ConfigError("object class ids start at 1");
  if (mesh.vertices.empty() || mesh.faces.empty())
    throw ConfigError("object mesh is empty");
  ObjectModel m;
  m.class_id = class_id;
  m.name = name;
  m.surface_points = sample_surface(mesh, density, seed, &m.surface_normals);
  m.bbox_min = m.bbox_max = mesh.vertices[0];
  for (const auto& v : mesh.vertices) {
    m.bbox_min = m.bbox_min.cwiseMin(v);
    m.bbox_max = m.bbox_max.cwiseMax(v);
  }
  m.bbox_center = 0.5 * (m.bbox_min + m.bbox_max);
  m.bbox_extents = m.bbox_max - m.bbox_min;
  // The farthest pair of a triangle set is attained at vertices.
  double best = 0;
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
    for (std::size_t j = i + 1; j < mesh.vertices.size(); ++j)
      best = std::max(best, (mesh.vertices[i] - mesh.vertices[j]).squaredNorm());
  m.diameter = std::sqrt(best);
  m.mesh = std::move(mesh);
  m.surface_tree.build(m.surface_points);
  return m;
}

ObjectModel make_builtin_object(int class_id, const std::string& name,
                                double density) {
  TriMesh mesh;
  if (name == "cup")
    mesh = make_cup_mesh(40, 90);
  else if (name == "cylinder")
    mesh = make_cylinder_mesh(30, 100);
  else if (name == "notched_cylinder")
    mesh = make_notched_cylinder_mesh(30, 100);
  else if (name == "box")
    mesh = make_box_mesh(Vec3d(60, 40, 100));
  else if (name == "sphere")
    mesh = make_sphere_mesh(35);
  else
    throw ConfigError("unknown builtin object: " + name);
  ObjectModel m = make_object_model(class_id, name, std::move(mesh), density);
  m.source = "builtin:" + name;
  return m;
}

const ObjectModel& ObjectDB::at(int class_id) const {
  auto it = models.find(class_id);
  if (it == models.end())
    throw ConfigError("class " + std::to_string(class_id) +
                      " is not in the object database");
  return it->second;
}

void ObjectDB::add(ObjectModel model) {
  int id = model.class_id;
  if (id < 1) throw ConfigError("object class ids start at 1");
  models[id] = std::move(model);
}

int ObjectDB::n_classes() const {
  int max_id = 0;
  for (const auto& [id, m] : models) max_id = std::max(max_id, id);
  return max_id + 1;
}

void save_object_manifest(const std::filesystem::path& path, const ObjectDB& db) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write object manifest: " + path.string());
  for (const auto& [id, m] : db.models) {
    std::string source = m.source.empty() ? (m.name + ".obj") : m.source;
    out << id << ' ' << m.name << ' ' << source << '\n';
  }
  if (!out) throw DataError("failed writing object manifest: " + path.string());
}

ObjectDB load_object_db(const std::filesystem::path& manifest, double density) {
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open object manifest: " + manifest.string());
  ObjectDB db;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    int id;
    std::string name, source;
    if (!(ss >> id)) continue;  // blank line
    if (!(ss >> name >> source))
      throw DataError("bad manifest line " + std::to_string(line_no) + " in " +
                      manifest.string());
    if (source.rfind("builtin:", 0) == 0) {
      ObjectModel m = make_builtin_object(id, source.substr(8), density);
      m.name = name;
      db.add(std::move(m));
    } else {
      std::filesystem::path obj = manifest.parent_path() / source;
      ObjectModel m = make_object_model(id, name, load_obj(obj), density);
      m.source = source;
      db.add(std::move(m));
    }
  }
  if (db.models.empty())
    throw DataError("object manifest is empty: " + manifest.string());
  return db;
}

}  // namespace votepose
