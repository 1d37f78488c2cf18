#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "lfv/objects.hpp"

namespace lfv {

enum class EpiDirection { Horizontal, Vertical };

struct EpiSample {
  double x = 0;  // image coordinate along the epipolar line
  double y = 0;  // EPI row, exact (not rounded)
  float intensity = 0;
  std::int64_t point_id = -1;
  int view = 0;
};

// One 2D EPI: all samples of one image line (row for horizontal EPIs, column
// for vertical ones) across the cameras of one array line.
struct Epi {
  int array_line = 0;  // array row (horizontal) or column (vertical)
  int image_line = 0;  // image row (horizontal) or column (vertical)
  std::vector<EpiSample> samples;
};

struct EpiVolume {
  EpiDirection direction = EpiDirection::Horizontal;
  int object = 0;
  int width = 0;   // image extent along the line
  int height = 0;  // n_w * mu
  int mu = 50;
  int n_w = 0;     // cameras per array line
  double focal = 0;          // pixels, along the line
  double baseline_unit = 0;  // metres of camera offset per EPI row
  std::vector<Epi> epis;

  // Rasterises one EPI (mean intensity per cell, rows rounded and capped at height - 1).
  Image plot(const Epi& epi) const;
};

// EPI row of each camera of an array line: height * (s - s_min) / (s_max - s_min)
// with s the camera centre coordinate along the line. Throws DegenerateBaseline.
std::vector<double> epi_rows(std::span<const double> positions, int height);

EpiVolume build_epi_volume(const LightFieldFrame& frame, const CameraArray& array, const ObjectCluster& cluster,
                           EpiDirection direction, int mu = 50);

struct EpiLine {
  double slope = 0;  // dx / dy
  double intercept = 0;
  std::vector<std::size_t> inliers;  // indices into the input samples, ascending
  double rms = 0;
  double depth = std::numeric_limits<double>::infinity();
};

// Total least squares fit of x = slope * y + intercept, then one refit without
// samples whose residual exceeds twice the RMS. Throws TooFewSamples.
EpiLine fit_epi_line(std::span<const EpiSample> samples);

// depth = -focal * baseline_unit / slope; infinity for non-negative slopes.
double epi_line_depth(double slope, double focal, double baseline_unit);

// Line per scene point of every EPI, with implied depth filled in.
struct PointLine {
  std::int64_t point_id = -1;
  int array_line = 0;
  EpiLine line;
};
std::vector<PointLine> fit_point_lines(const EpiVolume& volume);

// Window parameters. Depth is normalised as z / d_ref.
struct WindowParams {
  double sigma = 3.0;
  double d_ref = 1.0;
};

inline double normalized_depth(double z, double d_ref) { return z / d_ref; }

// Disparity of every view relative to `center` at unit normalised depth, in
// pixels: (fx * Bx, fy * By) / d_ref, B the camera offset from the centre.
std::vector<Vec2> view_shears(const CameraArray& array, int center, double d_ref, double pixel_scale = 1.0);

// Depth-sheared, Gaussian weighted sample of the light field restricted to the
// row and column of `center`. View k is sampled at
//   I_k(x0 + dx - u_k / d, y0 + dy - v_k / d)
// for d the normalised depth (infinite depth: no shear). Samples outside the
// image are NaN.
struct OrientedWindow {
  int radius = 0;
  std::vector<int> views;
  std::vector<float> values;   // [view][dy][dx]
  std::vector<float> weights;  // same layout; Gaussian in (dx, dy)
  bool clipped = false;

  int side() const noexcept { return 2 * radius + 1; }
  std::size_t active_views() const noexcept { return views.size(); }
};

int window_radius(double sigma);

OrientedWindow oriented_window(std::span<const Image> views, const CameraArray& array, int center, double depth,
                               const Vec2& center_px, const WindowParams& params = {}, double pixel_scale = 1.0);

// Precomputed pieces of oriented_window for repeated evaluation.
struct WindowLayout {
  int radius = 0;
  std::vector<int> views;
  std::vector<Vec2> shears;   // per entry of views, as from view_shears
  double d_ref = 1.0;
  std::vector<float> kernel;  // side * side Gaussian
};
WindowLayout window_layout(const CameraArray& array, int center, const WindowParams& params, double pixel_scale = 1.0);
// Fills layout.views.size() * side^2 values for a metric depth (<= 0 or
// infinite: no shear); returns true when clipped.
bool fill_window(std::span<const Image> views, const WindowLayout& layout, double depth, const Vec2& center_px,
                 float* values);

// Weighted mean of squared differences over jointly valid samples. Throws
// NoOverlap when no sample is valid in both windows.
double window_distance(const OrientedWindow& a, const OrientedWindow& b);
// Same on raw value arrays; NaN when there is no overlap.
double window_distance(const float* a, const float* b, const WindowLayout& layout) noexcept;

}  // namespace lfv
