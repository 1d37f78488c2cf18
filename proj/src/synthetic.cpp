#include "lfv/synthetic.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace lfv {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct Wave {
  double fx, fy, phase, amplitude;
};

struct Texture {
  std::array<std::vector<Wave>, 3> channels;

  float operator()(int c, double s, double t) const {
    double v = 0.5;
    for (const auto& w : channels[c])
      v += w.amplitude * std::cos(2.0 * std::numbers::pi * (w.fx * s + w.fy * t) + w.phase);
    return static_cast<float>(v);
  }
};

Texture make_texture(const SyntheticSceneSpec& spec, std::uint64_t seed, int texture_id) {
  Texture tex;
  for (int c = 0; c < 3; ++c) {
    std::mt19937_64 rng(splitmix(seed ^ splitmix(static_cast<std::uint64_t>(texture_id) * 3 + c + 1)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double fmin = 1.0 / spec.max_wavelength;
    const double fmax = 1.0 / spec.min_wavelength;
    double total = 0.0;
    for (int k = 0; k < spec.texture_components; ++k) {
      const double f = fmin + (fmax - fmin) * unit(rng);
      const double angle = 2.0 * std::numbers::pi * unit(rng);
      const double phase = 2.0 * std::numbers::pi * unit(rng);
      const double amp = 0.5 + 0.5 * unit(rng);
      tex.channels[c].push_back({f * std::cos(angle), f * std::sin(angle), phase, amp});
      total += amp;
    }
    // Keep values inside [0.1, 0.9].
    for (auto& w : tex.channels[c]) w.amplitude *= 0.4 / total;
  }
  return tex;
}

struct Pose {
  Vec3 center, u, v;
};

Pose plane_pose(const PlaneSpec& p, double frame) {
  Vec3 trans = Vec3::Zero();
  double rot = 0.0;
  const auto& keys = p.motion;
  if (!keys.empty()) {
    if (frame <= keys.front().frame) {
      trans = keys.front().translation;
      rot = keys.front().rotation_deg;
    } else if (frame >= keys.back().frame) {
      trans = keys.back().translation;
      rot = keys.back().rotation_deg;
    } else {
      for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (frame >= keys[i].frame && frame <= keys[i + 1].frame) {
          const double span = keys[i + 1].frame - keys[i].frame;
          const double a = span > 0 ? (frame - keys[i].frame) / span : 0.0;
          trans = (1 - a) * keys[i].translation + a * keys[i + 1].translation;
          rot = (1 - a) * keys[i].rotation_deg + a * keys[i + 1].rotation_deg;
          break;
        }
      }
    }
  }
  const double th = rot * std::numbers::pi / 180.0;
  const Vec3 u = p.axis_u.normalized();
  const Vec3 v = p.axis_v.normalized();
  return {p.center + trans, std::cos(th) * u + std::sin(th) * v, -std::sin(th) * u + std::cos(th) * v};
}

}  // namespace

float texture_value(const SyntheticSceneSpec& spec, std::uint64_t seed, int texture_id, int channel,
                    double s, double t) {
  return make_texture(spec, seed, texture_id)(channel, s, t);
}

CameraArray make_camera_array(const CameraGridSpec& g, int width, int height) {
  if (!(g.baseline_x > 0 && g.baseline_y > 0)) fail(ErrorCode::InvalidArgument, "baselines must be positive");
  std::vector<CameraCalibration> cams;
  Mat3 k = Mat3::Identity();
  k(0, 0) = k(1, 1) = g.focal;
  k(0, 2) = (width - 1) / 2.0;
  k(1, 2) = (height - 1) / 2.0;
  int reference = 0;
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c) {
      const int idx = static_cast<int>(cams.size());
      CameraCalibration cam;
      cam.intrinsics = k;
      cam.grid = {r, c};
      const Vec3 center((c - g.reference.col) * g.baseline_x, (r - g.reference.row) * g.baseline_y, 0.0);
      if (idx < static_cast<int>(g.yaw_perturbation_deg.size()) && g.yaw_perturbation_deg[idx] != 0.0)
        cam.rotation =
            Eigen::AngleAxisd(g.yaw_perturbation_deg[idx] * std::numbers::pi / 180.0, Vec3::UnitY())
                .toRotationMatrix();
      cam.translation = -cam.rotation * center;
      if (cam.grid == g.reference) reference = idx;
      cams.push_back(cam);
    }
  return CameraArray(std::move(cams), g.rows, g.cols, reference);
}

GroundTruth::GroundTruth(SyntheticSceneSpec spec, CameraArray array)
    : spec_(std::move(spec)), array_(std::move(array)) {
  std::int64_t offset = 0;
  for (const auto& p : spec_.planes) {
    if (!(p.point_spacing > 0)) fail(ErrorCode::InvalidArgument, "point spacing must be positive");
    const int cols = static_cast<int>(std::floor(p.width / p.point_spacing)) + 1;
    const int rows = static_cast<int>(std::floor(p.height / p.point_spacing)) + 1;
    id_offsets_.push_back(offset);
    grid_cols_.push_back(cols);
    grid_rows_.push_back(rows);
    offset += static_cast<std::int64_t>(cols) * rows;
  }
  id_offsets_.push_back(offset);
}

int GroundTruth::plane_of(std::int64_t id) const {
  for (std::size_t k = 0; k + 1 < id_offsets_.size(); ++k)
    if (id >= id_offsets_[k] && id < id_offsets_[k + 1]) return static_cast<int>(k);
  fail(ErrorCode::InvalidArgument, "unknown point id " + std::to_string(id));
}

Vec3 GroundTruth::surface_point(int plane, double s, double t, double frame) const {
  const Pose pose = plane_pose(spec_.planes.at(plane), frame);
  return pose.center + s * pose.u + t * pose.v;
}

Vec3 GroundTruth::trajectory(std::int64_t id, double frame) const {
  const int k = plane_of(id);
  const auto& p = spec_.planes[k];
  const std::int64_t local = id - id_offsets_[k];
  const int ix = static_cast<int>(local % grid_cols_[k]);
  const int iy = static_cast<int>(local / grid_cols_[k]);
  const double s = (ix - (grid_cols_[k] - 1) / 2.0) * p.point_spacing;
  const double t = (iy - (grid_rows_[k] - 1) / 2.0) * p.point_spacing;
  return surface_point(k, s, t, frame);
}

std::pair<Vec3, double> GroundTruth::plane_equation(int plane, double frame) const {
  const Pose pose = plane_pose(spec_.planes.at(plane), frame);
  const Vec3 n = pose.u.cross(pose.v).normalized();
  return {n, n.dot(pose.center)};
}

GroundTruth::Hit GroundTruth::cast(const CameraCalibration& cam, const Vec2& pixel, double frame) const {
  // Ray with unit camera-space z, so the hit parameter equals the depth.
  const Vec3 origin = cam.center();
  const Vec3 dir = cam.rotation.transpose() * (cam.intrinsics.inverse() * Vec3(pixel.x(), pixel.y(), 1.0));
  Hit best;
  for (int k = 0; k < static_cast<int>(spec_.planes.size()); ++k) {
    const auto& p = spec_.planes[k];
    const Pose pose = plane_pose(p, frame);
    const Vec3 n = pose.u.cross(pose.v);
    const double denom = n.dot(dir);
    if (std::abs(denom) < 1e-15) continue;
    const double depth = n.dot(pose.center - origin) / denom;
    if (!(depth > 0)) continue;
    const Vec3 rel = origin + depth * dir - pose.center;
    const double s = rel.dot(pose.u), t = rel.dot(pose.v);
    if (std::abs(s) > p.width / 2 || std::abs(t) > p.height / 2) continue;
    if (best.plane < 0 || depth < best.depth) best = Hit{k, depth, s, t};
  }
  return best;
}

SyntheticOutput generate_synthetic(const SyntheticSceneSpec& spec, std::uint64_t seed) {
  if (spec.frames < 1 || spec.width < 2 || spec.height < 2)
    fail(ErrorCode::InvalidArgument, "synthetic spec needs frames >= 1 and an image of at least 2x2");
  CameraArray array = make_camera_array(spec.grid, spec.width, spec.height);
  SyntheticOutput out{LightFieldSequence{}, GroundTruth(spec, array)};
  const GroundTruth& gt = out.truth;
  const int nv = array.size();
  const int nf = spec.frames;

  for (int f = 0; f < nf; ++f)
    for (int k = 0; k < static_cast<int>(spec.planes.size()); ++k) {
      const auto& p = spec.planes[k];
      for (double s : {-p.width / 2, p.width / 2})
        for (double t : {-p.height / 2, p.height / 2}) {
          const Vec3 corner = gt.surface_point(k, s, t, f);
          for (const auto& cam : array.cameras())
            if (!((cam.rotation * corner + cam.translation).z() > 1e-6))
              fail(ErrorCode::PlaneBehindCamera, "plane " + std::to_string(k) + " behind a camera at frame " +
                                                     std::to_string(f));
        }
    }

  std::vector<Texture> textures;
  for (const auto& p : spec.planes) textures.push_back(make_texture(spec, seed, p.texture_id));

  LightFieldSequence& seq = out.sequence;
  seq.array = array;
  seq.width = spec.width;
  seq.height = spec.height;
  seq.frame_rate = spec.frame_rate;
  seq.frames.resize(nf);
  auto& truth = out.truth;
  truth.depth.assign(nf, std::vector<DepthMap>(nv));
  truth.object_ids.assign(nf, std::vector<LabelMap>(nv));
  truth.flow.assign(nf > 1 ? nf - 1 : 0, std::vector<FlowField>(nv));
  for (auto& fr : seq.frames) {
    fr.views.assign(nv, Image());
    fr.depths.assign(nv, DepthMap());
  }

  const int jobs = nf * nv;
#pragma omp parallel for schedule(dynamic)
  for (int job = 0; job < jobs; ++job) {
    const int f = job / nv, v = job % nv;
    const auto& cam = array.camera(v);
    Image img(spec.width, spec.height, 3, 0.0f);
    DepthMap depth(spec.width, spec.height, 0.0f);
    LabelMap ids(spec.width, spec.height, -1);
    std::mt19937_64 rng(splitmix(seed ^ splitmix((static_cast<std::uint64_t>(f) << 20) + v + 7)));
    std::normal_distribution<double> noise(0.0, spec.noise_sigma > 0 ? spec.noise_sigma : 1.0);
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x) {
        const auto hit = gt.cast(cam, Vec2(x, y), f);
        if (hit.plane >= 0) {
          depth(x, y) = static_cast<float>(hit.depth);
          ids(x, y) = spec.planes[hit.plane].object_id;
          for (int c = 0; c < 3; ++c) img.at(x, y, c) = textures[hit.plane](c, hit.s, hit.t);
        }
        if (spec.noise_sigma > 0)
          for (int c = 0; c < 3; ++c)
            img.at(x, y, c) = std::clamp(img.at(x, y, c) + static_cast<float>(noise(rng)), 0.0f, 1.0f);
      }
    seq.frames[f].views[v] = std::move(img);
    seq.frames[f].depths[v] = depth;
    truth.depth[f][v] = std::move(depth);
    truth.object_ids[f][v] = std::move(ids);

    if (f + 1 < nf) {
      FlowField flow(spec.width, spec.height);
      flow.view = v;
      flow.from_frame = f;
      flow.to_frame = f + 1;
      for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
          const auto hit = gt.cast(cam, Vec2(x, y), f);
          if (hit.plane < 0) continue;
          const Vec3 moved = gt.surface_point(hit.plane, hit.s, hit.t, f + 1);
          const auto proj = try_project(moved, cam);
          if (!proj) continue;
          flow.valid(x, y) = 1;
          flow.u(x, y) = static_cast<float>(proj->pixel.x() - x);
          flow.v(x, y) = static_cast<float>(proj->pixel.y() - y);
          const Vec2& q = proj->pixel;
          bool occluded = !(q.x() >= 0 && q.y() >= 0 && q.x() <= spec.width - 1 && q.y() <= spec.height - 1);
          if (!occluded) {
            const auto front = gt.cast(cam, q, f + 1);
            occluded = front.plane >= 0 && front.plane != hit.plane && front.depth < proj->depth * (1 - 1e-9);
          }
          flow.occluded(x, y) = occluded ? 1 : 0;
        }
      truth.flow[f][v] = std::move(flow);
    }
  }

  // Point clouds: regular grid on every plane, ids stable across frames.
  for (int f = 0; f < nf; ++f) {
    PointCloud3D& cloud = seq.frames[f].cloud;
    std::int64_t id = 0;
    for (int k = 0; k < static_cast<int>(spec.planes.size()); ++k) {
      const auto& p = spec.planes[k];
      const int cols = static_cast<int>(std::floor(p.width / p.point_spacing)) + 1;
      const int rows = static_cast<int>(std::floor(p.height / p.point_spacing)) + 1;
      for (int iy = 0; iy < rows; ++iy)
        for (int ix = 0; ix < cols; ++ix, ++id) {
          const double s = (ix - (cols - 1) / 2.0) * p.point_spacing;
          const double t = (iy - (rows - 1) / 2.0) * p.point_spacing;
          const Vec3 X = gt.surface_point(k, s, t, f);
          std::uint64_t vis = 0;
          for (int v = 0; v < nv; ++v) {
            const auto proj = try_project(X, array.camera(v));
            if (!proj) continue;
            const int px = static_cast<int>(std::floor(proj->pixel.x() + 0.5));
            const int py = static_cast<int>(std::floor(proj->pixel.y() + 0.5));
            if (px < 0 || py < 0 || px >= spec.width || py >= spec.height) continue;
            const auto front = gt.cast(array.camera(v), proj->pixel, f);
            if (front.plane >= 0 && front.plane != k && front.depth < proj->depth * (1 - 1e-9)) continue;
            vis |= std::uint64_t{1} << v;
          }
          cloud.push_back(X, vis, p.object_id, id);
        }
    }
  }
  return out;
}

}  // namespace lfv
