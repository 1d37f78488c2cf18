#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "lfv/keyframes.hpp"
#include "lfv/synthetic.hpp"
#include "support.hpp"

using namespace lfv;

namespace {

// Scorer driven by a closure returning (M, I) per (i, j); L follows the
// distance rule.
class ScriptedScorer : public FrameScorer {
 public:
  ScriptedScorer(int frames, int views, std::function<std::pair<double, double>(int, int)> mi)
      : frames_(frames), views_(views), mi_(std::move(mi)) {}
  int num_frames() const override { return frames_; }
  int num_objects() const override { return 1; }
  std::vector<ViewMetrics> metrics(int i, int j, int, int d_max) const override {
    const auto [m, s] = mi_(i, j);
    return std::vector<ViewMetrics>(views_, ViewMetrics{m, distance_metric(i, j, d_max), s});
  }

 private:
  int frames_, views_;
  std::function<std::pair<double, double>(int, int)> mi_;
};

Mask disc(int w, int h, double cx, double cy, double r) {
  Mask m(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m(x, y) = (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r;
  return m;
}

Mask shifted(const Mask& m, int dx, int dy) {
  Mask out(m.width(), m.height(), 0);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m.contains(x - dx, y - dy)) out(x, y) = m(x - dx, y - dy);
  return out;
}

double iou(const Mask& a, const Mask& b) {
  std::size_t i = 0, u = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    i += a[k] && b[k];
    u += a[k] || b[k];
  }
  return u ? double(i) / u : 0;
}

}  // namespace

TEST(Appearance, CountFormula) {
  EXPECT_DOUBLE_EQ(appearance_metric(10, 10, 10), 1.0);
  EXPECT_DOUBLE_EQ(appearance_metric(0, 10, 10), 0.0);
  EXPECT_DOUBLE_EQ(appearance_metric(3, 4, 8), 0.5);
  EXPECT_DOUBLE_EQ(appearance_metric(9, 4, 8), 1.0);
  EXPECT_THROW(appearance_metric(0, 0, 0), Error);
}

TEST(Appearance, RigidShiftAgreesWithMatchCount) {
  const auto out = generate_synthetic(test::plane_scene(1, 1, 64, 48, 2, 2.0, Vec3(0.03, 0, 0)), 2);
  std::vector<FeatureSet> fs;
  for (int f = 0; f < 2; ++f) {
    const auto& fr = out.sequence.frames[f];
    ObjectCluster cl;
    for (std::size_t i = 0; i < fr.cloud.size(); ++i) cl.members.push_back(i);
    fs.push_back(extract_features(to_luma(fr.views[0]), fr.cloud, cl, out.sequence.array.camera(0), 0, f, 120));
  }
  const double q = static_cast<double>(match_keyframes(fs[0], fs[1]).size());
  EXPECT_DOUBLE_EQ(appearance_metric(fs[0], fs[1]), std::min(1.0, 2 * q / (fs[0].size() + fs[1].size())));
  EXPECT_DOUBLE_EQ(appearance_metric(fs[0], fs[1]), appearance_metric(fs[1], fs[0]));
}

TEST(Distance, Formula) {
  EXPECT_DOUBLE_EQ(distance_metric(0, 50), 0.5);
  EXPECT_DOUBLE_EQ(distance_metric(0, 100), 1.0);
  EXPECT_DOUBLE_EQ(distance_metric(3, 13, 20), 0.5);
  EXPECT_THROW(distance_metric(5, 5), Error);
  EXPECT_THROW(distance_metric(6, 5), Error);
  EXPECT_EQ(KeyFrameParams{}.d_max, 100);
  EXPECT_DOUBLE_EQ(KeyFrameParams{}.threshold, 0.75);
}

TEST(Shape, IdenticalMasks) {
  const Mask m = disc(48, 48, 20, 24, 9);
  EXPECT_DOUBLE_EQ(shape_metric(m, m), 1.0);
}

TEST(Shape, TranslationRecovered) {
  Mask m(64, 64, 0);
  for (int y = 14; y < 40; ++y)
    for (int x = 12; x < 30 + (y % 7); ++x) m(x, y) = 1;
  const Mask t = shifted(m, 7, 3);
  // Exhaustive translation search as the reference.
  double best = 0;
  for (int dy = -10; dy <= 10; ++dy)
    for (int dx = -10; dx <= 10; ++dx) best = std::max(best, iou(m, shifted(t, dx, dy)));
  ASSERT_DOUBLE_EQ(best, 1.0);
  EXPECT_GE(shape_metric(m, t), 0.99);
  const ShapeAlignment a = align_silhouettes(m, t);
  EXPECT_FALSE(a.fallback);
}

TEST(Shape, ScaleAndRotationImproveOverlap) {
  const Mask a = disc(64, 64, 32, 32, 10);
  const Mask b = disc(64, 64, 28, 30, 14);
  EXPECT_GT(shape_metric(a, b), iou(a, b));
  EXPECT_GE(shape_metric(a, b), 0.9);
}

TEST(Shape, SymmetricAndBounded) {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> c(16, 48), r(5, 14);
  for (int k = 0; k < 10; ++k) {
    const double ra = r(rng), rb = r(rng);
    const Mask a = disc(64, 64, c(rng), c(rng), ra);
    const Mask b = disc(64, 64, c(rng), c(rng), rb);
    const double ab = shape_metric(a, b), ba = shape_metric(b, a);
    EXPECT_GE(ab, 0);
    EXPECT_LE(ab, 1);
    // Symmetric up to the rasterisation of the smaller disc.
    EXPECT_NEAR(ab, ba, 1.0 / std::min(ra, rb));
  }
}

TEST(Shape, EmptyThrows) {
  const Mask a = disc(16, 16, 8, 8, 3);
  try {
    shape_metric(a, Mask(16, 16, 0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptySilhouette);
  }
}

TEST(Similarity, PlugIn) {
  EXPECT_NEAR(frame_similarity(std::vector<ViewMetrics>(4, {1, 0, 1})), 1 - 2.0 / 3, 1e-12);
  EXPECT_NEAR(frame_similarity(std::vector<ViewMetrics>(4, {0, 1, 0})), 1 - 1.0 / 3, 1e-12);
  EXPECT_DOUBLE_EQ(frame_similarity(std::vector<ViewMetrics>(4, {0, 0, 0})), 1.0);
}

TEST(Similarity, BoundedAndMonotoneInDistance) {
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int k = 0; k < 100; ++k) {
    const double m = u(rng), s = u(rng);
    double last = 2;
    for (int j = 1; j <= 100; ++j) {
      const double d = frame_similarity({{m, distance_metric(0, j), s}, {s, distance_metric(0, j), m}});
      EXPECT_GE(d, 0);
      EXPECT_LE(d, 1);
      EXPECT_LE(d, last);
      last = d;
    }
  }
}

TEST(Select, ConstantSequenceCutsAtCap) {
  const KeyFrameSet ks = select_keyframes(ScriptedScorer(250, 3, [](int, int) { return std::pair{1.0, 1.0}; }));
  EXPECT_EQ(ks.keyframes, (std::vector<int>{0, 100, 200}));
}

TEST(Select, SmallCapMultiples) {
  KeyFrameParams p;
  p.d_max = 7;
  const KeyFrameSet ks = select_keyframes(ScriptedScorer(30, 2, [](int, int) { return std::pair{1.0, 1.0}; }), p);
  EXPECT_EQ(ks.keyframes, (std::vector<int>{0, 7, 14, 21, 28}));
}

TEST(Select, MetricCollapseCuts) {
  // Everything after frame 40 is unrelated to anything before it.
  auto mi = [](int i, int j) { return (i < 40) == (j < 40) ? std::pair{1.0, 1.0} : std::pair{0.0, 0.0}; };
  const KeyFrameSet ks = select_keyframes(ScriptedScorer(120, 4, mi));
  EXPECT_EQ(ks.keyframes, (std::vector<int>{0, 40}));
}

TEST(Select, SegmentsPartitionFrames) {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> noise(500);
  for (double& n : noise) n = u(rng);
  KeyFrameParams p;
  p.d_max = 20;
  const KeyFrameSet ks =
      select_keyframes(ScriptedScorer(173, 2, [&](int i, int j) { return std::pair{noise[j], noise[i + j]}; }), p);
  ASSERT_EQ(ks.keyframes.front(), 0);
  std::vector<int> owner(173, 0);
  for (std::size_t k = 0; k < ks.keyframes.size(); ++k) {
    const auto [b, e] = ks.segment(k);
    EXPECT_LE(e - b, p.d_max);
    for (int f = b; f < e; ++f) {
      ++owner[f];
      EXPECT_EQ(ks.segment_of(f), k);
    }
  }
  for (int o : owner) EXPECT_EQ(o, 1);
}

TEST(Select, TextRoundTrip) {
  auto mi = [](int i, int j) { return std::pair{1.0 - 0.01 * (j - i), 0.9}; };
  KeyFrameParams p;
  p.d_max = 10;
  const KeyFrameSet ks = select_keyframes(ScriptedScorer(25, 2, mi), p);
  const KeyFrameSet back = parse_keyframes(format_keyframes(ks));
  EXPECT_EQ(back.keyframes, ks.keyframes);
  EXPECT_EQ(back.num_frames, 25);
  EXPECT_EQ(back.d_max, 10);
  EXPECT_DOUBLE_EQ(back.threshold, ks.threshold);
  EXPECT_EQ(format_keyframes(back), format_keyframes(ks));
}

TEST(FeatureScorerTest, MissingViewsCountAsInvisible) {
  FeatureSet fs;
  fs.features.resize(3);
  for (std::size_t i = 0; i < 3; ++i) fs.features[i].descriptor[i] = 1;
  const Mask m = disc(16, 16, 8, 8, 4);
  // Two frames, one object, two views; view 1 empty in frame 1.
  std::vector<std::vector<std::vector<FeatureSet>>> f = {{{fs, fs}}, {{fs, FeatureSet{}}}};
  std::vector<std::vector<std::vector<Mask>>> s = {{{m, m}}, {{m, Mask()}}};
  const FeatureScorer scorer(f, s);
  const auto v = scorer.metrics(0, 1, 0, 100);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_DOUBLE_EQ(v[0].m, 1.0);
  EXPECT_DOUBLE_EQ(v[0].i, 1.0);
  EXPECT_DOUBLE_EQ(v[1].m, 0.0);
  EXPECT_DOUBLE_EQ(v[1].i, 0.0);
  EXPECT_DOUBLE_EQ(v[1].l, 0.01);
}
