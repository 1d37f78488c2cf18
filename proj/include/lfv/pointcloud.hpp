#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lfv/camera.hpp"

namespace lfv {

// Per-frame reconstruction. Point ids are only meaningful within one frame
// for real captures; the synthetic generator keeps them stable across frames
// so they double as ground-truth identities.
struct PointCloud3D {
  std::vector<Vec3> points;
  std::vector<std::uint64_t> visibility;  // bit c set: visible in view c
  std::vector<int> object_ids;
  std::vector<std::int64_t> point_ids;

  std::size_t size() const noexcept { return points.size(); }
  bool empty() const noexcept { return points.empty(); }
  bool visible(std::size_t i, int view) const noexcept {
    return ((visibility[i] >> view) & 1u) != 0;
  }
  void push_back(const Vec3& p, std::uint64_t vis, int object_id, std::int64_t point_id) {
    points.push_back(p);
    visibility.push_back(vis);
    object_ids.push_back(object_id);
    point_ids.push_back(point_id);
  }
};

constexpr int kMaxViews = 64;

// Depth of whatever surface the point lands on must agree within rel_tol * z.
bool is_visible(const Vec3& point, const CameraCalibration& cam, const DepthMap& depth,
                double rel_tol = 0.02);

// Recomputes every visibility bit from per-view depth maps.
void compute_visibility(PointCloud3D& cloud, const CameraArray& array,
                        std::span<const DepthMap> depths, double rel_tol = 0.02);

// Z-buffered splat of the projected points (3x3 footprint) for clouds that
// arrive without depth maps.
DepthMap splat_depth(const PointCloud3D& cloud, const CameraCalibration& cam, int width, int height);

struct LightFieldFrame {
  std::vector<Image> views;     // rectified, one per camera
  std::vector<DepthMap> depths; // one per camera
  PointCloud3D cloud;
};

struct LightFieldSequence {
  CameraArray array;  // rectified calibration
  int width = 0;
  int height = 0;
  double frame_rate = 25.0;
  std::vector<LightFieldFrame> frames;

  int num_views() const noexcept { return array.size(); }
  int num_frames() const noexcept { return static_cast<int>(frames.size()); }
};

}  // namespace lfv
