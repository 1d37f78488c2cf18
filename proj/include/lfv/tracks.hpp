#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "lfv/camera.hpp"

namespace lfv {

struct TrackObservation {
  Vec2 pixel;
  std::int64_t point_id = -1;
  bool operator==(const TrackObservation&) const = default;
};

// Sparse temporal track of one projected 3D point in one view, anchored at a
// key-frame. Frames missing from `observations` are occlusions or dropouts.
struct Track {
  int id = 0;
  int keyframe = 0;
  int view = 0;
  int object = 0;
  std::map<int, TrackObservation> observations;
  bool operator==(const Track&) const = default;
};

struct TrackSet {
  std::vector<Track> tracks;
  bool operator==(const TrackSet&) const = default;
  std::size_t size() const noexcept { return tracks.size(); }
};

}  // namespace lfv
