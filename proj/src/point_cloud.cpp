#include "votepose/point_cloud.hpp"

#include <fstream>

#include "votepose/common.hpp"

namespace votepose {

void save_ply(const std::filesystem::path& path, const PointCloud& cloud,
              const std::vector<std::array<uint8_t, 3>>* colors) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  bool with_normals = cloud.has_normals();
  bool with_colors = colors && colors->size() == cloud.size();
  out << "ply\nformat ascii 1.0\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (with_normals)
    out << "property float nx\nproperty float ny\nproperty float nz\n";
  if (with_colors)
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";
  out.precision(8);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3d& p = cloud.positions[i];
    out << p.x() << " " << p.y() << " " << p.z();
    if (with_normals) {
      const Vec3d& n = cloud.normals[i];
      out << " " << n.x() << " " << n.y() << " " << n.z();
    }
    if (with_colors) {
      const auto& c = (*colors)[i];
      out << " " << int(c[0]) << " " << int(c[1]) << " " << int(c[2]);
    }
    out << "\n";
  }
}

}  // namespace votepose
