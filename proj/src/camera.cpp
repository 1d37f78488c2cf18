#include "lfv/camera.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <set>
#include <string>

namespace lfv {

Vec2 Distortion::apply(const Vec2& xy) const noexcept {
  const double x = xy.x(), y = xy.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
  return {x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
          y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y};
}

void CameraCalibration::validate() const {
  const double err = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (!(err <= 1e-9)) fail(ErrorCode::InvalidArgument, "rotation is not orthonormal");
  if (intrinsics(1, 0) != 0 || intrinsics(2, 0) != 0 || intrinsics(2, 1) != 0 ||
      intrinsics(2, 2) != 1)
    fail(ErrorCode::InvalidArgument, "intrinsics must be upper triangular with K(2,2)=1");
  if (!(fx() > 0 && fy() > 0)) fail(ErrorCode::InvalidArgument, "focal lengths must be positive");
}

std::optional<Projection> try_project(const Vec3& point, const CameraCalibration& cam) noexcept {
  const Vec3 pc = cam.rotation * point + cam.translation;
  if (!(pc.z() > 0.0)) return std::nullopt;
  const Vec3 h = cam.intrinsics * pc;
  return Projection{Vec2(h.x() / h.z(), h.y() / h.z()), pc.z()};
}

Projection project_point(const Vec3& point, const CameraCalibration& cam) {
  auto p = try_project(point, cam);
  if (!p) fail(ErrorCode::BehindCamera, "point has non-positive camera-space depth");
  return *p;
}

Vec3 backproject_pixel(const Vec2& pixel, double depth, const CameraCalibration& cam) {
  if (!(depth > 0.0)) fail(ErrorCode::NonPositiveDepth, "depth must be positive");
  const Mat3& k = cam.intrinsics;
  // Upper-triangular inverse, written out to avoid a general solve per pixel.
  const double y = (pixel.y() - k(1, 2)) / k(1, 1);
  const double x = (pixel.x() - k(0, 2) - k(0, 1) * y) / k(0, 0);
  const Vec3 pc(x * depth, y * depth, depth);
  return cam.rotation.transpose() * (pc - cam.translation);
}

CameraArray::CameraArray(std::vector<CameraCalibration> cameras, int rows, int cols, int reference)
    : cameras_(std::move(cameras)), rows_(rows), cols_(cols), reference_(reference) {
  if (rows <= 0 || cols <= 0) fail(ErrorCode::InvalidArgument, "array needs rows, cols >= 1");
  if (static_cast<int>(cameras_.size()) != rows * cols)
    fail(ErrorCode::CalibrationCountMismatch,
         "camera count " + std::to_string(cameras_.size()) + " != rows*cols " +
             std::to_string(rows * cols));
  if (reference < 0 || reference >= static_cast<int>(cameras_.size()))
    fail(ErrorCode::InvalidArgument, "reference index out of range");
  std::set<std::pair<int, int>> seen;
  for (const auto& c : cameras_) {
    c.validate();
    if (!seen.insert({c.grid.row, c.grid.col}).second)
      fail(ErrorCode::InvalidArgument, "duplicate grid position");
  }
}

std::optional<int> CameraArray::index_at(GridPos pos) const noexcept {
  for (int i = 0; i < size(); ++i)
    if (cameras_[i].grid == pos) return i;
  return std::nullopt;
}

std::vector<int> CameraArray::cross_views(int center) const {
  const GridPos c = cameras_.at(center).grid;
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (cameras_[i].grid.row == c.row || cameras_[i].grid.col == c.col) out.push_back(i);
  return out;
}

CameraCalibration rectified_calibration(const CameraCalibration& cam, const CameraCalibration& ref) {
  CameraCalibration out;
  out.intrinsics = ref.intrinsics;
  out.rotation = ref.rotation;
  out.translation = -ref.rotation * cam.center();
  out.grid = cam.grid;
  return out;
}

RectifiedView rectify_to_reference(const Image& img, const CameraCalibration& cam,
                                   const CameraCalibration& ref) {
  const Mat3 rot = cam.rotation * ref.rotation.transpose();
  const Mat3 homography = cam.intrinsics * rot * ref.intrinsics.inverse();
  const double det = homography.determinant();
  if (!std::isfinite(det) || std::abs(det) < 1e-12 * std::pow(homography.norm(), 3))
    fail(ErrorCode::DegenerateHomography, "rectifying homography is singular");

  RectifiedView out{Image(img.width(), img.height(), img.channels()),
                    Mask(img.width(), img.height(), 0)};
  if (cam.distortion.is_zero() && (homography - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12) {
    out.image = img;
    out.valid = Mask(img.width(), img.height(), 1);
    return out;
  }

  const Mat3 k_ref_inv = ref.intrinsics.inverse();
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      const Vec3 ray = rot * (k_ref_inv * Vec3(x, y, 1.0));
      if (!(ray.z() > 0.0)) continue;
      const Vec2 d = cam.distortion.apply(Vec2(ray.x() / ray.z(), ray.y() / ray.z()));
      const Vec3 src = cam.intrinsics * Vec3(d.x(), d.y(), 1.0);
      bool ok = true;
      for (int c = 0; c < img.channels() && ok; ++c) ok = img.sample(src.x(), src.y(), c, out.image.at(x, y, c));
      if (ok) {
        out.valid(x, y) = 1;
      } else {
        for (int c = 0; c < img.channels(); ++c) out.image.at(x, y, c) = 0.0f;
      }
    }
  return out;
}

CameraArray rectified_array(const CameraArray& array) {
  std::vector<CameraCalibration> cams;
  cams.reserve(array.size());
  for (const auto& c : array.cameras()) cams.push_back(rectified_calibration(c, array.reference_camera()));
  return CameraArray(std::move(cams), array.rows(), array.cols(), array.reference());
}

}  // namespace lfv
