#pragma once

#include <cstdint>
#include <vector>

#include "lfv/flow_field.hpp"
#include "lfv/pointcloud.hpp"

namespace lfv {

// Pose key of a plane; poses between keys are linearly interpolated.
struct MotionKey {
  double frame = 0;
  Vec3 translation = Vec3::Zero();
  double rotation_deg = 0;  // in-plane rotation about the plane normal
};

struct PlaneSpec {
  Vec3 center = Vec3(0, 0, 2);
  Vec3 axis_u = Vec3::UnitX();  // texture axes; normal = u x v
  Vec3 axis_v = Vec3::UnitY();
  double width = 1.0;   // metres along axis_u
  double height = 1.0;  // metres along axis_v
  int texture_id = 0;
  int object_id = 0;
  double point_spacing = 0.02;
  std::vector<MotionKey> motion;
};

struct CameraGridSpec {
  int rows = 1;
  int cols = 1;
  double baseline_x = 0.1;
  double baseline_y = 0.1;
  GridPos reference;
  double focal = 100.0;
  // Optional yaw (degrees) per view, applied to the camera rotation only.
  std::vector<double> yaw_perturbation_deg;
};

struct SyntheticSceneSpec {
  std::vector<PlaneSpec> planes;
  CameraGridSpec grid;
  int width = 64;
  int height = 48;
  int frames = 2;
  double noise_sigma = 0.0;
  double min_wavelength = 0.05;  // texture band, metres on the plane
  double max_wavelength = 0.2;
  int texture_components = 12;
  double frame_rate = 25.0;
};

struct SyntheticOutput;

// Analytic oracle built from a scene spec. Everything here is evaluated in
// closed form (ray casting, pinhole projection); no resampling.
class GroundTruth {
 public:
  GroundTruth() = default;
  GroundTruth(SyntheticSceneSpec spec, CameraArray array);

  const SyntheticSceneSpec& spec() const noexcept { return spec_; }
  const CameraArray& array() const noexcept { return array_; }

  std::vector<std::vector<DepthMap>> depth;       // [frame][view]
  std::vector<std::vector<LabelMap>> object_ids;  // [frame][view], -1 = no surface
  std::vector<std::vector<FlowField>> flow;       // [frame t][view], t -> t+1, occluded set

  // World position of a cloud point id at a frame (the exact trajectory).
  Vec3 trajectory(std::int64_t point_id, double frame) const;
  // Plane k at a frame as (unit normal n, offset c) with n.X = c.
  std::pair<Vec3, double> plane_equation(int plane, double frame) const;
  // Nearest surface along the camera ray through a (sub-)pixel.
  struct Hit {
    int plane = -1;
    double depth = 0;
    double s = 0, t = 0;  // texture coordinates on the plane
  };
  Hit cast(const CameraCalibration& cam, const Vec2& pixel, double frame) const;
  Vec3 surface_point(int plane, double s, double t, double frame) const;
  int plane_of(std::int64_t point_id) const;

 private:
  SyntheticSceneSpec spec_;
  CameraArray array_;
  std::vector<std::int64_t> id_offsets_;
  std::vector<int> grid_cols_;
  std::vector<int> grid_rows_;
};

struct SyntheticOutput {
  LightFieldSequence sequence;
  GroundTruth truth;
};

// Camera array of the grid spec (identity rotation unless perturbed).
CameraArray make_camera_array(const CameraGridSpec& grid, int width, int height);

// Renders the scene. Deterministic for a given spec and seed regardless of
// thread count. Throws PlaneBehindCamera if any plane corner leaves the
// frustum half-space of any camera at any frame.
SyntheticOutput generate_synthetic(const SyntheticSceneSpec& spec, std::uint64_t seed);

// Band-limited texture value of plane texture `texture_id`, channel c.
float texture_value(const SyntheticSceneSpec& spec, std::uint64_t seed, int texture_id, int channel,
                    double s, double t);

}  // namespace lfv
