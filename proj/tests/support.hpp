#pragma once

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>

#include <map>
#include <mutex>
#include <tuple>

#include <unistd.h>

#include "lfv/align4d.hpp"
#include "lfv/synthetic.hpp"

namespace lfv::test {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("lfv_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

// Camera grid of `rows` x `cols` with the given focal length; the reference
// camera sits at (rows / 2, cols / 2).
inline CameraGridSpec grid_spec(int rows, int cols, double focal, double baseline) {
  CameraGridSpec g;
  g.rows = rows;
  g.cols = cols;
  g.focal = focal;
  g.baseline_x = baseline;
  g.baseline_y = baseline;
  g.reference = {rows / 2, cols / 2};
  return g;
}

// Textured plane at depth z covering every view for all frames, translating
// by `step` metres per frame. Texture periods span roughly 4..16 pixels and
// cloud points are about one pixel apart.
inline PlaneSpec covering_plane(const CameraGridSpec& g, int width, int height, int frames, double z,
                                const Vec3& step, int texture_id, int object_id) {
  PlaneSpec p;
  p.center = Vec3(0, 0, z);
  const double travel = step.norm() * frames;
  p.width = 1.4 * width * z / g.focal + g.baseline_x * g.cols + 2 * travel;
  p.height = 1.4 * height * z / g.focal + g.baseline_y * g.rows + 2 * travel;
  p.texture_id = texture_id;
  p.object_id = object_id;
  p.point_spacing = z / g.focal;
  p.motion = {{0, Vec3::Zero(), 0}, {static_cast<double>(std::max(frames - 1, 1)), step * std::max(frames - 1, 1), 0}};
  return p;
}

inline SyntheticSceneSpec plane_scene(int rows, int cols, int width, int height, int frames, double z,
                                      const Vec3& step = Vec3::Zero(), double focal = 0) {
  SyntheticSceneSpec s;
  s.grid = grid_spec(rows, cols, focal > 0 ? focal : width, 0.05);
  s.width = width;
  s.height = height;
  s.frames = frames;
  s.min_wavelength = 4 * z / s.grid.focal;
  s.max_wavelength = 16 * z / s.grid.focal;
  s.planes = {covering_plane(s.grid, width, height, frames, z, step, 0, 0)};
  return s;
}

// Static textured background plus a smaller textured plane moving in front
// of it; the front plane hides and reveals background as it moves.
inline SyntheticSceneSpec occlusion_scene(int rows, int cols, int width, int height, int frames, double z_back,
                                          double z_front, const Vec3& front_step, double front_fraction = 0.45) {
  SyntheticSceneSpec s = plane_scene(rows, cols, width, height, frames, z_back);
  s.planes[0].object_id = 1;
  PlaneSpec f;
  f.center = Vec3(0, 0, z_front);
  f.width = front_fraction * width * z_front / s.grid.focal;
  f.height = front_fraction * height * z_front / s.grid.focal;
  f.texture_id = 1;
  f.object_id = 0;
  f.point_spacing = 0.8 * z_front / s.grid.focal;
  f.center -= front_step * 0.5 * (frames - 1);
  f.motion = {{0, Vec3::Zero(), 0}, {static_cast<double>(frames - 1), front_step * (frames - 1), 0}};
  s.planes.push_back(f);
  s.min_wavelength = 4 * z_back / s.grid.focal;
  s.max_wavelength = 16 * z_back / s.grid.focal;
  return s;
}

// Exact flow of one view between any two frames from the scene geometry:
// the surface seen at p moves with its plane and is re-projected. Occluded
// when another surface is nearer at the landing point; invalid where the
// ray hits nothing or the landing leaves the image.
inline FlowField analytic_flow(const GroundTruth& truth, int view, int from, int to) {
  const CameraCalibration& cam = truth.array().camera(view);
  const int w = truth.spec().width, h = truth.spec().height;
  FlowField f(w, h);
  f.view = view;
  f.from_frame = from;
  f.to_frame = to;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const auto hit = truth.cast(cam, Vec2(x, y), from);
      if (hit.plane < 0) continue;
      const Vec3 X = truth.surface_point(hit.plane, hit.s, hit.t, to);
      const auto p = try_project(X, cam);
      if (!p) continue;
      f.u(x, y) = static_cast<float>(p->pixel.x() - x);
      f.v(x, y) = static_cast<float>(p->pixel.y() - y);
      if (p->pixel.x() < 0 || p->pixel.y() < 0 || p->pixel.x() > w - 1 || p->pixel.y() > h - 1) {
        f.occluded(x, y) = 1;
        continue;
      }
      f.valid(x, y) = 1;
      const auto there = truth.cast(cam, p->pixel, to);
      f.occluded(x, y) = there.plane != hit.plane || std::abs(there.depth - p->depth) > 1e-6 * p->depth;
    }
  return f;
}

// Flow source answering every (view, from, to) with the analytic flow,
// optionally biased on frame-to-frame pairs.
class AnalyticFlows : public FlowSource {
 public:
  explicit AnalyticFlows(const GroundTruth& truth, Vec2 consecutive_bias = Vec2::Zero())
      : truth_(&truth), bias_(consecutive_bias) {}
  const FlowField& flow(int view, int from, int to) const override {
    const std::lock_guard<std::mutex> lock(mutex_);
    auto key = std::make_tuple(view, from, to);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    FlowField f = analytic_flow(*truth_, view, from, to);
    if (to == from + 1)
      for (std::size_t i = 0; i < f.u.size(); ++i) {
        f.u[i] += static_cast<float>(bias_.x());
        f.v[i] += static_cast<float>(bias_.y());
      }
    return cache_.emplace(key, std::move(f)).first->second;
  }

 private:
  const GroundTruth* truth_;
  Vec2 bias_;
  mutable std::mutex mutex_;
  mutable std::map<std::tuple<int, int, int>, FlowField> cache_;
};

}  // namespace lfv::test
