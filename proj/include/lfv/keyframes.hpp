#pragma once

#include <string>
#include <vector>

#include "lfv/features.hpp"

namespace lfv {

// Fraction of features matched between two frames: 2Q / (R_i + R_j), clamped
// to [0, 1]. Throws NoFeatures when both sets are empty.
double appearance_metric(std::size_t matches, std::size_t features_i, std::size_t features_j);
double appearance_metric(const FeatureSet& fi, const FeatureSet& fj, const MatchParams& params = {});

// (j - i) / d_max. Throws BadOrder for j <= i.
double distance_metric(int i, int j, int d_max = 100);

struct ShapeAlignment {
  double iou = 0;
  double tx = 0, ty = 0;
  double angle = 0;  // radians
  double scale = 1;
  bool fallback = false;  // iterative alignment diverged, centroid only
};

// Aligns mask_j onto mask_i with a similarity transform and reports the IoU
// of the aligned masks. Throws EmptySilhouette.
ShapeAlignment align_silhouettes(const Mask& mask_i, const Mask& mask_j, int max_iterations = 50);
double shape_metric(const Mask& mask_i, const Mask& mask_j);

struct ViewMetrics {
  double m = 0;  // appearance
  double l = 0;  // distance
  double i = 0;  // shape
};

// D = 1 - sum(M + I + L) / (3 N_v); larger means more dissimilar.
double frame_similarity(const std::vector<ViewMetrics>& views);

struct PairScore {
  int from = 0;
  int to = 0;
  int object = 0;
  double d = 0;
  std::vector<ViewMetrics> views;
};

struct KeyFrameSet {
  std::vector<int> keyframes;
  int num_frames = 0;
  int d_max = 100;
  double threshold = 0.75;
  std::vector<PairScore> log;

  // Frames owned by key-frame k: [keyframes[k], next key-frame).
  std::pair<int, int> segment(std::size_t k) const;
  // Index of the key-frame whose segment contains `frame`.
  std::size_t segment_of(int frame) const;
};

// Dissimilarity of (i, j) for one object, given the metrics per view.
// Implementations supply the per-view metrics lazily so that selection can
// stop early.
class FrameScorer {
 public:
  virtual ~FrameScorer() = default;
  virtual int num_frames() const = 0;
  virtual int num_objects() const = 0;
  virtual std::vector<ViewMetrics> metrics(int i, int j, int object, int d_max) const = 0;
};

struct KeyFrameParams {
  int d_max = 100;
  double threshold = 0.75;
};

// Greedy scan: from key-frame k, the first j with max over objects of
// D(k, j) > threshold, or j - k == d_max, becomes the next key-frame.
KeyFrameSet select_keyframes(const FrameScorer& scorer, const KeyFrameParams& params = {});

// Scorer over precomputed per-frame feature sets and silhouettes, indexed
// [frame][object][view]. Missing entries (empty features or masks) count as
// invisible and contribute M = I = 0.
class FeatureScorer : public FrameScorer {
 public:
  FeatureScorer(std::vector<std::vector<std::vector<FeatureSet>>> features,
                std::vector<std::vector<std::vector<Mask>>> silhouettes, MatchParams params = {});
  int num_frames() const override { return static_cast<int>(features_.size()); }
  int num_objects() const override;
  std::vector<ViewMetrics> metrics(int i, int j, int object, int d_max) const override;

 private:
  std::vector<std::vector<std::vector<FeatureSet>>> features_;
  std::vector<std::vector<std::vector<Mask>>> silhouettes_;
  MatchParams params_;
};

std::string format_keyframes(const KeyFrameSet& set);
KeyFrameSet parse_keyframes(const std::string& text);

}  // namespace lfv
