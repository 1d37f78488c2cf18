#include "lfv/pointcloud.hpp"

#include <cmath>

namespace lfv {

bool is_visible(const Vec3& point, const CameraCalibration& cam, const DepthMap& depth,
                double rel_tol) {
  const auto proj = try_project(point, cam);
  if (!proj) return false;
  float surface = 0.0f;
  if (!sample_nearest(depth, proj->pixel.x(), proj->pixel.y(), surface)) return false;
  if (!(surface > 0.0f)) return false;
  return std::abs(surface - proj->depth) <= rel_tol * proj->depth;
}

void compute_visibility(PointCloud3D& cloud, const CameraArray& array,
                        std::span<const DepthMap> depths, double rel_tol) {
  if (array.size() > kMaxViews) fail(ErrorCode::InvalidArgument, "at most 64 views supported");
  if (static_cast<int>(depths.size()) != array.size())
    fail(ErrorCode::CalibrationCountMismatch, "one depth map per view required");
  cloud.visibility.assign(cloud.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (int v = 0; v < array.size(); ++v)
      if (is_visible(cloud.points[i], array.camera(v), depths[v], rel_tol))
        cloud.visibility[i] |= std::uint64_t{1} << v;
}

DepthMap splat_depth(const PointCloud3D& cloud, const CameraCalibration& cam, int width, int height) {
  DepthMap depth(width, height, 0.0f);
  for (const auto& p : cloud.points) {
    const auto proj = try_project(p, cam);
    if (!proj) continue;
    const int cx = static_cast<int>(std::floor(proj->pixel.x() + 0.5));
    const int cy = static_cast<int>(std::floor(proj->pixel.y() + 0.5));
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        if (!depth.contains(cx + dx, cy + dy)) continue;
        float& d = depth(cx + dx, cy + dy);
        if (d == 0.0f || proj->depth < d) d = static_cast<float>(proj->depth);
      }
  }
  return depth;
}

}  // namespace lfv
