#pragma once

#include <span>
#include <vector>

#include "lfv/epi.hpp"
#include "lfv/flow_field.hpp"

namespace lfv {

struct FlowParams {
  double lambda_l = 1.0;
  double lambda_c = 1.0;
  double lambda_r = 0.5;
  double lambda_rl = 0.5;
  double lambda_rc = 0.5;
  int search_radius = 4;      // candidates m0 + [-r, r]^2 per level
  int levels = 4;
  double scale = 0.5;
  int iterations = 2;         // Jacobi sweeps of the regularised update
  double tau_occ = 1.0;       // round-trip error, pixels
  double sparse_radius = 2.0; // sparse constraint window, level pixels
  double seed_radius = 8.0;   // nearest-track initialisation, level pixels
  double c_inf = 1e6;
  double sigma = 3.0;         // oriented window
  double d_ref = 1.0;
  bool compensate_disparity = true;
  bool subpixel = true;

  void validate() const;  // throws InvalidArgument
};

// Returned by the data terms when the displaced sample leaves the image or
// the windows share no valid sample.
inline constexpr double kEnergySentinel = 1e3;

// A sparse track observation used as constraint and initialisation:
// pixel in the source frame and its displacement to the target frame.
struct SparseSeed {
  Vec2 pixel = Vec2::Zero();
  Vec2 displacement = Vec2::Zero();
};

// One instant of the array as seen by the flow: luma views and depths.
struct FlowFrame {
  std::vector<Image> views;
  std::vector<DepthMap> depths;
};

FlowFrame make_flow_frame(const LightFieldFrame& frame);
FlowFrame downsample_frame(const FlowFrame& frame, double scale);

struct AppearanceEnergy {
  double temporal = 0;  // e_C^T, mean over views
  double view = 0;      // e_C^V, mean over the other views
  double sparse = 0;    // e_C^S
  double total() const noexcept { return temporal + view + sparse; }
};

// State of a pixel of the neighbourhood for the regulariser.
struct NeighbourState {
  int mx = 0, my = 0;
  double e_l = 0;  // E_L at the neighbour's current estimate, 0 when lambda_l = 0
  double e_c = 0;  // E_C without the sparse term
};

// E_R = sum_q |m - m_q|^2 * (lambda_rl * (mean E_L - min E_L) + lambda_rc * (mean E_C - min E_C))
// over the given neighbourhood (the estimator passes the 3x3 block around p,
// p included, row-major, restricted to the flow region).
double regularization_energy(int mx, int my, std::span<const NeighbourState> neighbours, const FlowParams& params);

// Energy terms for one view between two frames at one pyramid level.
class FlowLevel {
 public:
  FlowLevel(const CameraArray& array, int view, const FlowFrame& t0, const FlowFrame& t1, const FlowParams& params,
            double pixel_scale = 1.0);

  int width() const noexcept { return t0_->views[0].width(); }
  int height() const noexcept { return t0_->views[0].height(); }
  int view() const noexcept { return view_; }
  const WindowLayout& layout() const noexcept { return layout_; }

  // E_L: distance between the oriented window at p (frame t0, depth at p) and
  // at p + m (frame t1, depth at p + m, falling back to the depth at p).
  double light_field_energy(int x, int y, int mx, int my) const;
  AppearanceEnergy appearance_energy(int x, int y, int mx, int my, std::span<const SparseSeed> seeds) const;
  // lambda_l * E_L + lambda_c * E_C
  double data_energy(int x, int y, int mx, int my, std::span<const SparseSeed> seeds) const;

  // Building blocks shared with the estimator's window cache.
  std::size_t window_size() const noexcept;
  double source_depth(int x, int y) const;
  double landing_depth(int x, int y, int qx, int qy) const;
  bool has_target_depth(int qx, int qy) const;
  void source_window(int x, int y, float* out) const;
  void target_window(int qx, int qy, double depth, float* out) const;
  double light_field_energy(const float* source, const float* target) const;
  double appearance_terms(int x, int y, int mx, int my, double& temporal, double& view) const;
  double sparse_energy(int x, int y, int mx, int my, std::span<const SparseSeed> seeds) const;

 private:
  const FlowFrame* t0_;
  const FlowFrame* t1_;
  FlowParams params_;
  int view_;
  int num_views_;
  WindowLayout layout_;
  std::vector<Vec2> shears_;  // every view relative to view_
};

// Coarse-to-fine discrete search over the region. Seeds are in full
// resolution pixels. Throws NoObjectPixels when the region is empty.
FlowField estimate_flow_field(const CameraArray& array, int view, const FlowFrame& t0, const FlowFrame& t1,
                              const Mask& region, std::span<const SparseSeed> seeds, const FlowParams& params);

// Same on a single level, starting from the given integer initial flow (no
// pyramid); used by the pyramid and by exhaustive checks.
FlowField estimate_flow_level(const FlowLevel& level, const Mask& region, const Grid<int>& init_x,
                              const Grid<int>& init_y, std::span<const SparseSeed> seeds, const FlowParams& params,
                              bool finest);

// Integer initial flow: displacement of the nearest seed within the seed
// radius, rounded; zero elsewhere.
void seed_initial_flow(std::span<const SparseSeed> seeds, double radius, Grid<int>& init_x, Grid<int>& init_y);

// p occluded iff |m_fwd(p) + m_bwd(p + m_fwd(p))| > tau, with the landing
// pixel rounded. Landing outside the backward field's valid area counts as
// occluded. The round-trip error is written to `round_trip` when given.
Mask detect_occlusions(const FlowField& forward, const FlowField& backward, double tau,
                       Grid<float>* round_trip = nullptr);

}  // namespace lfv
