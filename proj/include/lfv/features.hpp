#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lfv/objects.hpp"
#include "lfv/tracks.hpp"

namespace lfv {

inline constexpr int kDescriptorSize = 128;
using Descriptor = std::array<float, kDescriptorSize>;

struct Feature {
  Vec2 pixel;
  Descriptor descriptor{};
  std::int64_t point_id = -1;
  std::size_t cloud_index = 0;
};

struct FeatureSet {
  int view = 0;
  int frame = 0;
  int object = 0;
  std::vector<Feature> features;
  std::size_t size() const noexcept { return features.size(); }
};

struct Match {
  std::size_t a = 0;
  std::size_t b = 0;
  double distance = 0;
  bool operator==(const Match&) const = default;
};

struct MatchSet {
  int view = 0;
  int frame_a = 0;
  int frame_b = 0;
  std::vector<Match> matches;
  std::size_t size() const noexcept { return matches.size(); }
};

// 4x4 cells x 8 orientation bins over a 16x16 patch centred on `anchor`,
// Gaussian weighted and L2 normalised. nullopt when the patch leaves the image
// or has no gradient.
std::optional<Descriptor> compute_descriptor(const Image& gray, const Vec2& anchor);

// One feature per cluster point visible in `view`, anchored at its projection.
// Anchors whose patch leaves the image are dropped; `max_features` > 0 keeps
// a subset chosen by point id, stable across frames. Throws NotVisible when no
// member is visible.
FeatureSet extract_features(const Image& gray, const PointCloud3D& cloud, const ObjectCluster& cluster,
                            const CameraCalibration& cam, int view, int frame, std::size_t max_features = 0);

double descriptor_distance(const Descriptor& a, const Descriptor& b) noexcept;

// Nearest neighbour under L2 with the first/second ratio test in the A->B
// direction followed by a B->A symmetry check. Ties go to the lower index.
MatchSet match_features(const FeatureSet& a, const FeatureSet& b, double ratio = 0.85);

enum class CoherenceRule {
  DisplacementMagnitude,  // |d_i| <= 2 * mean |d_j| over the m x m window
  DeviationFromMean,      // |d_i - mean d| <= 2 * mean |d_j - mean d|
};

// Drops matches whose displacement is inconsistent with the matches whose
// source pixel lies in the m x m window around it (itself included).
MatchSet filter_spatial_coherence(const MatchSet& matches, const FeatureSet& a, const FeatureSet& b, int m = 11,
                                  CoherenceRule rule = CoherenceRule::DisplacementMagnitude);

struct MatchParams {
  double ratio = 0.85;
  int coherence_window = 11;
  CoherenceRule rule = CoherenceRule::DisplacementMagnitude;
};

MatchSet match_keyframes(const FeatureSet& key_a, const FeatureSet& key_b, const MatchParams& params = {});

// Tracks for one (key-frame, view, object). segment[0] holds the key-frame
// features and the rest the following frames up to the next key-frame.
TrackSet build_tracks(std::span<const FeatureSet> segment, const MatchParams& params = {}, int first_id = 0);

}  // namespace lfv
