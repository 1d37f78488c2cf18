#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "lfv/image.hpp"

namespace lfv {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct GridPos {
  int row = 0;
  int col = 0;
  bool operator==(const GridPos&) const = default;
};

// Brown-Conrady radial-tangential coefficients.
struct Distortion {
  double k1 = 0, k2 = 0, k3 = 0, p1 = 0, p2 = 0;
  bool is_zero() const noexcept { return k1 == 0 && k2 == 0 && k3 == 0 && p1 == 0 && p2 == 0; }
  // Maps undistorted normalised coordinates to distorted ones.
  Vec2 apply(const Vec2& xy) const noexcept;
};

// Pinhole camera: x_cam = R * X + t, pixel = K * x_cam / z.
struct CameraCalibration {
  Mat3 intrinsics = Mat3::Identity();
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  Distortion distortion;
  GridPos grid;

  Vec3 center() const { return -rotation.transpose() * translation; }
  double fx() const { return intrinsics(0, 0); }
  double fy() const { return intrinsics(1, 1); }

  // Throws InvalidArgument when R is not orthonormal or K is malformed.
  void validate() const;
};

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
};

// Undistorted pinhole projection. Throws BehindCamera when camera-space z <= 0.
Projection project_point(const Vec3& point, const CameraCalibration& cam);
// Same as project_point but reports failure instead of throwing.
std::optional<Projection> try_project(const Vec3& point, const CameraCalibration& cam) noexcept;

// Inverse of project_point for a given camera-space depth.
Vec3 backproject_pixel(const Vec2& pixel, double depth, const CameraCalibration& cam);

class CameraArray {
 public:
  CameraArray() = default;
  CameraArray(std::vector<CameraCalibration> cameras, int rows, int cols, int reference);

  const std::vector<CameraCalibration>& cameras() const noexcept { return cameras_; }
  const CameraCalibration& camera(int i) const { return cameras_.at(i); }
  int size() const noexcept { return static_cast<int>(cameras_.size()); }
  int rows() const noexcept { return rows_; }
  int cols() const noexcept { return cols_; }
  int reference() const noexcept { return reference_; }
  const CameraCalibration& reference_camera() const { return cameras_.at(reference_); }

  std::optional<int> index_at(GridPos pos) const noexcept;

  // Views sharing the row or the column of `center` (the angular cross mask).
  std::vector<int> cross_views(int center) const;

 private:
  std::vector<CameraCalibration> cameras_;
  int rows_ = 0;
  int cols_ = 0;
  int reference_ = 0;
};

struct RectifiedView {
  Image image;
  Mask valid;
};

// Camera with the reference intrinsics and rotation placed at `cam`'s centre.
CameraCalibration rectified_calibration(const CameraCalibration& cam, const CameraCalibration& ref);

// Undistorts `img` and warps it onto the reference image plane. Pixels that
// map outside the source are 0 with valid = 0.
RectifiedView rectify_to_reference(const Image& img, const CameraCalibration& cam,
                                   const CameraCalibration& ref);

// Array whose cameras all share the reference intrinsics and rotation.
CameraArray rectified_array(const CameraArray& array);

}  // namespace lfv
