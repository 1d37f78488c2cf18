#pragma once

#include <string>
#include <vector>

#include "lfv/align4d.hpp"

namespace lfv {

struct SoeResult {
  double ratio = 0;      // mean |propagated & reference| / |propagated|
  double soe_error = 1;  // 1 - ratio
  std::size_t pairs = 0;
  std::size_t skipped_empty = 0;
};

// Masks are paired by index (one entry per view and frame).
SoeResult silhouette_overlap_error(const std::vector<Mask>& propagated, const std::vector<Mask>& reference);

// Forward splat of the mask through the usable pixels of a flow, closed with
// one 3x3 closing.
Mask propagate_mask(const Mask& mask, const FlowField& flow);

enum class CoherenceMode { FrameToFrame, KeyframeToFrame };

struct CoherenceResult {
  double mean = 0;
  double stddev = 0;
  std::size_t samples = 0;
};

// RMS colour difference sqrt((dr^2 + dg^2 + db^2) / 3) on the 0-255 scale,
// sampled in the reference view at both ends of every frame pair of every
// trajectory (consecutive frames, or anchor key-frame and frame). Pairs where
// the point is hidden in the reference view are skipped.
CoherenceResult temporal_coherence(const Correspondence4D& model, const LightFieldSequence& seq, CoherenceMode mode);

double rms_color_difference(const float a[3], const float b[3]);

// Per frame and view of `seq`: trajectories born before the frame and visible
// in that view.
std::vector<std::vector<std::size_t>> propagated_counts(const Correspondence4D& model, const LightFieldSequence& seq);

// 100 * mean over (frame, view) of min(1, config count / full count), over
// pairs where the full run propagated something. Both models are evaluated
// with the cameras and depths of the full sequence.
double completeness(const Correspondence4D& config_model, const Correspondence4D& full_model,
                    const LightFieldSequence& full_seq);

struct CameraConfig {
  std::string name;
  std::vector<GridPos> positions;
};

// Default subsets for a 4 x 5 array: config1..config4, corner4, center4.
std::vector<CameraConfig> default_camera_configs();

struct ConfiguredSequence {
  LightFieldSequence sequence;
  std::vector<int> views;  // original index of every kept view
  bool reference_moved = false;
};

// Keeps the cameras of a rectangular grid subset. Throws EmptyConfig for an
// empty subset and InvalidArgument for positions off the array or a
// non-rectangular subset.
ConfiguredSequence apply_camera_config(const LightFieldSequence& seq, const CameraConfig& config);

// Mean endpoint error over pixels inside `region` that are valid in both
// fields and not occluded in the reference.
struct EpeResult {
  double mean = 0;
  std::size_t pixels = 0;
};
EpeResult endpoint_error(const FlowField& estimate, const FlowField& truth, const Mask& region);

}  // namespace lfv
