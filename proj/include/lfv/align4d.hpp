#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lfv/flow_field.hpp"
#include "lfv/keyframes.hpp"
#include "lfv/pointcloud.hpp"
#include "lfv/tracks.hpp"

namespace lfv {

struct PointState {
  Vec3 position = Vec3::Zero();
  double confidence = 1.0;
  int view = -1;  // view whose flow produced the position; -1 at birth
  bool anchored = false;
  bool operator==(const PointState&) const = default;
};

// One tracked surface point. `source_point` is the cloud point the
// trajectory started from; it is bookkeeping only and never used to move the
// point between frames.
struct Trajectory {
  std::int64_t id = 0;
  std::int64_t source_point = -1;
  int object = -1;
  int birth = 0;
  int death = 0;  // last tracked frame
  int track = -1; // linked sparse track, -1 if none
  std::map<int, PointState> frames;
  bool operator==(const Trajectory&) const = default;
};

struct Correspondence4D {
  int num_frames = 0;
  std::vector<int> keyframes;
  std::vector<Trajectory> trajectories;  // ascending id
  bool operator==(const Correspondence4D&) const = default;

  std::size_t alive(int frame) const;
};

struct FlowCorrespondence {
  Vec2 pixel = Vec2::Zero();
  Vec2 landing = Vec2::Zero();
  Vec3 from = Vec3::Zero();
  Vec3 to = Vec3::Zero();
  double round_trip = 0;
};

struct BackprojectedFlow {
  std::vector<FlowCorrespondence> pairs;
  std::size_t dropped = 0;  // usable pixels whose endpoints lack depth
};

// Depth at a sub-pixel location: bilinear when the four neighbours carry
// consistent depth, nearest otherwise; 0 when there is no surface.
double depth_at(const DepthMap& depth, const Vec2& pixel);

// Lifts every usable flow vector to a pair of 3D points on the surfaces of
// the two frames.
BackprojectedFlow backproject_flow(const FlowField& flow, const DepthMap& depth_from, const DepthMap& depth_to,
                                   const CameraCalibration& cam);

struct PointEstimate {
  std::int64_t id = 0;
  Vec3 position = Vec3::Zero();
  double round_trip = 0;
};

struct ViewEstimates {
  int view = 0;
  std::size_t visible_points = 0;
  std::vector<PointEstimate> estimates;
};

// Views in descending order of visible points (ties: lower view index); each
// point keeps the first estimate it receives. Confidence = 1 / (1 + round trip).
std::map<std::int64_t, PointState> fuse_correspondences(std::vector<ViewEstimates> views);

// Flow between two frames of one view, forward direction, with occlusion and
// round-trip error filled in.
class FlowSource {
 public:
  virtual ~FlowSource() = default;
  virtual const FlowField& flow(int view, int from, int to) const = 0;
};

struct AlignParams {
  double anchor_threshold = 1.0;  // pixels, reprojected
  double link_radius = 1.0;       // sparse track link, pixels
  double visibility_tolerance = 0.02;
};

// Moves every point alive at `from` to `to` through the per-view flows.
std::map<std::int64_t, PointState> propagate_points(const LightFieldSequence& seq, const FlowSource& flows,
                                                    const std::map<std::int64_t, Vec3>& points, int from, int to,
                                                    const AlignParams& params = {});

// Cloud points of frame t not covered (3x3) by the projection of any tracked
// point in a view where they are visible. They become new trajectories born
// at t, linked to a sparse track observed within link_radius.
std::vector<Trajectory> propagate_new_regions(const LightFieldSequence& seq, const TrackSet& tracks,
                                              const std::map<std::int64_t, Vec3>& tracked, int t,
                                              std::int64_t first_id, const AlignParams& params = {});

Correspondence4D build_4d_model(const LightFieldSequence& seq, const KeyFrameSet& keyframes, const TrackSet& tracks,
                                const FlowSource& flows, const AlignParams& params = {});

// Largest key-frame strictly before `frame`.
int anchor_keyframe(const std::vector<int>& keyframes, int frame);

std::string format_correspondence(const Correspondence4D& model);
Correspondence4D parse_correspondence(const std::string& text);

}  // namespace lfv
