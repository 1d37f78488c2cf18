#include <gtest/gtest.h>

#include <random>

#include "lfv/flow.hpp"
#include "lfv/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lfv;

namespace {

FlowParams small_params() {
  FlowParams p;
  p.sigma = 1.0;
  p.search_radius = 2;
  p.levels = 1;
  return p;
}

struct Pair {
  SyntheticOutput out;
  FlowFrame t0, t1;
};

Pair make_pair(const SyntheticSceneSpec& spec, std::uint64_t seed, int from = 0, int to = 1) {
  Pair p{generate_synthetic(spec, seed), {}, {}};
  p.t0 = make_flow_frame(p.out.sequence.frames[from]);
  p.t1 = make_flow_frame(p.out.sequence.frames[to]);
  return p;
}

Mask full(int w, int h) { return Mask(w, h, 1); }

}  // namespace

TEST(FlowParamsTest, Validate) {
  FlowParams p;
  EXPECT_NO_THROW(p.validate());
  p.lambda_c = -1;
  EXPECT_THROW(p.validate(), Error);
  p = FlowParams{};
  p.levels = 0;
  EXPECT_THROW(p.validate(), Error);
  p = FlowParams{};
  p.scale = 1.0;
  EXPECT_THROW(p.validate(), Error);
  p = FlowParams{};
  EXPECT_DOUBLE_EQ(p.lambda_l, 1.0);
  EXPECT_DOUBLE_EQ(p.lambda_r, 0.5);
  EXPECT_EQ(p.search_radius, 4);
  EXPECT_EQ(p.levels, 4);
  EXPECT_DOUBLE_EQ(p.tau_occ, 1.0);
  EXPECT_DOUBLE_EQ(p.c_inf, 1e6);
}

TEST(Regulariser, UniformFieldIsFree) {
  std::vector<NeighbourState> hood(9, {2, -1, 0.3, 0.7});
  hood[4].e_l = 5;
  EXPECT_EQ(regularization_energy(2, -1, hood, FlowParams{}), 0.0);
}

TEST(Regulariser, ConstantEnergyIsFree) {
  std::vector<NeighbourState> hood;
  for (int k = 0; k < 9; ++k) hood.push_back({k % 3, k / 3, 0.25, 0.5});
  EXPECT_EQ(regularization_energy(7, 7, hood, FlowParams{}), 0.0);
}

TEST(Regulariser, HandBuiltPatch) {
  // E_L = 1..9 gives mean - min = 4; E_C constant contributes nothing.
  std::vector<NeighbourState> hood;
  for (int k = 0; k < 9; ++k) hood.push_back({0, 0, double(k + 1), 2.0});
  FlowParams p;
  // Candidate (1, 0): nine unit differences.
  EXPECT_DOUBLE_EQ(regularization_energy(1, 0, hood, p), 9 * 1.0 * p.lambda_rl * 4.0);
  hood[0].mx = 3;
  EXPECT_DOUBLE_EQ(regularization_energy(1, 0, hood, p), (8 + 4) * p.lambda_rl * 4.0);
}

TEST(Regulariser, MatchesOracleOnRandomHoods) {
  std::mt19937 rng(2);
  std::uniform_int_distribution<int> m(-4, 4);
  std::uniform_real_distribution<double> e(0, 3);
  FlowParams p;
  p.lambda_rl = 0.7;
  p.lambda_rc = 0.2;
  for (int t = 0; t < 200; ++t) {
    std::vector<NeighbourState> hood(1 + t % 9);
    for (auto& q : hood) q = {m(rng), m(rng), e(rng), e(rng)};
    const int mx = m(rng), my = m(rng);
    EXPECT_NEAR(regularization_energy(mx, my, hood, p), oracle::regulariser(mx, my, hood, p), 1e-9);
    EXPECT_GE(regularization_energy(mx, my, hood, p), 0);
  }
}

TEST(Energy, StaticSceneZeroAtZeroMotion) {
  auto pr = make_pair(test::plane_scene(3, 3, 32, 24, 2, 2.0), 1);
  const FlowLevel level(pr.out.sequence.array, 4, pr.t0, pr.t1, small_params());
  for (int y = 5; y < 19; y += 3)
    for (int x = 5; x < 27; x += 3) {
      EXPECT_NEAR(level.light_field_energy(x, y, 0, 0), 0, 1e-9);
      const AppearanceEnergy a = level.appearance_energy(x, y, 0, 0, {});
      EXPECT_NEAR(a.temporal, 0, 1e-12);
      EXPECT_EQ(a.sparse, 0);
      EXPECT_GE(level.light_field_energy(x, y, 1, 0), 0);
    }
}

TEST(Energy, GlobalTranslationShiftsTheMinimum) {
  // 1 px per frame: E_L at the true motion equals the static E_L at zero.
  const double z = 2.0, f = 32;
  auto moving = make_pair(test::plane_scene(3, 3, 32, 24, 2, z, Vec3(z / f, 0, 0)), 3);
  const FlowLevel level(moving.out.sequence.array, 4, moving.t0, moving.t1, small_params());
  int wins = 0, n = 0;
  for (int y = 6; y < 18; ++y)
    for (int x = 6; x < 24; ++x) {
      ++n;
      const double truth = level.light_field_energy(x, y, 1, 0);
      EXPECT_LT(truth, 1e-4);
      bool best = true;
      for (int my = -3; my <= 3; ++my)
        for (int mx = -2; mx <= 4; ++mx)
          if (std::max(std::abs(mx - 1), std::abs(my)) >= 2) best = best && truth < level.light_field_energy(x, y, mx, my);
      wins += best;
    }
  EXPECT_GE(wins, 0.9 * n);
}

TEST(Energy, TemporalTermMinimisedAtTruth) {
  const double z = 2.0, f = 32;
  auto pr = make_pair(test::plane_scene(3, 3, 32, 24, 2, z, Vec3(2 * z / f, z / f, 0)), 4);
  const FlowLevel level(pr.out.sequence.array, 4, pr.t0, pr.t1, small_params());
  std::mt19937 rng(1);
  std::uniform_int_distribution<int> px(6, 22), py(6, 15);
  for (int t = 0; t < 20; ++t) {
    const int x = px(rng), y = py(rng);
    const double truth = level.appearance_energy(x, y, 2, 1, {}).temporal;
    for (int my = -1; my <= 3; ++my)
      for (int mx = 0; mx <= 4; ++mx)
        if (mx != 2 || my != 1) {
          EXPECT_LT(truth, level.appearance_energy(x, y, mx, my, {}).temporal);
        }
  }
}

TEST(Energy, SparseIndicator) {
  auto pr = make_pair(test::plane_scene(3, 3, 32, 24, 2, 2.0), 1);
  FlowParams p = small_params();
  const FlowLevel level(pr.out.sequence.array, 4, pr.t0, pr.t1, p);
  const std::vector<SparseSeed> seeds = {{Vec2(10, 10), Vec2(3, -1)}};
  EXPECT_EQ(level.appearance_energy(10, 10, 3, -1, seeds).sparse, 0);
  EXPECT_EQ(level.appearance_energy(11, 10, 4, -1, seeds).sparse, 0);
  EXPECT_EQ(level.appearance_energy(10, 10, -3, 1, seeds).sparse, p.c_inf);
  EXPECT_EQ(level.appearance_energy(25, 20, -3, 1, seeds).sparse, 0);
}

TEST(Energy, OutsideLandingIsSentinel) {
  auto pr = make_pair(test::plane_scene(3, 3, 32, 24, 2, 2.0), 1);
  const FlowLevel level(pr.out.sequence.array, 4, pr.t0, pr.t1, small_params());
  EXPECT_GE(level.appearance_energy(1, 1, -5, 0, {}).temporal, kEnergySentinel);
}

TEST(Estimate, StaticSceneZeroFlowNoOcclusion) {
  auto pr = make_pair(test::plane_scene(3, 3, 32, 24, 2, 2.0), 5);
  FlowParams p = small_params();
  p.levels = 2;
  p.sigma = 3.0;
  const auto& arr = pr.out.sequence.array;
  const FlowField fwd = estimate_flow_field(arr, 4, pr.t0, pr.t1, full(32, 24), {}, p);
  const FlowField bwd = estimate_flow_field(arr, 4, pr.t1, pr.t0, full(32, 24), {}, p);
  double sum = 0;
  for (std::size_t i = 0; i < fwd.u.size(); ++i) {
    ASSERT_TRUE(fwd.valid[i]);
    EXPECT_EQ(fwd.step_x[i], 0);
    EXPECT_EQ(fwd.step_y[i], 0);
    EXPECT_LE(std::max(std::abs(fwd.u[i]), std::abs(fwd.v[i])), 0.5f);
    sum += std::hypot(fwd.u[i], fwd.v[i]);
  }
  EXPECT_LT(sum / static_cast<double>(fwd.u.size()), 0.05);
  EXPECT_EQ(count_nonzero(detect_occlusions(fwd, bwd, p.tau_occ)), 0u);
  p.subpixel = false;
  const FlowField whole = estimate_flow_field(arr, 4, pr.t0, pr.t1, full(32, 24), {}, p);
  for (std::size_t i = 0; i < whole.u.size(); ++i) EXPECT_EQ(std::hypot(whole.u[i], whole.v[i]), 0.0f);
}

TEST(Estimate, EmptyRegionThrows) {
  auto pr = make_pair(test::plane_scene(1, 1, 16, 16, 2, 2.0), 5);
  try {
    estimate_flow_field(pr.out.sequence.array, 0, pr.t0, pr.t1, Mask(16, 16, 0), {}, small_params());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoObjectPixels);
  }
}

class BruteForceFlow : public ::testing::TestWithParam<int> {};

TEST_P(BruteForceFlow, SingleLevelEqualsExhaustiveMinimiser) {
  const int trial = GetParam();
  const double z = 2.0, f = 24;
  auto spec = test::occlusion_scene(2, 2, 16, 16, 2, z, 1.2, Vec3(1.5 * z / f, -0.5 * z / f, 0));
  spec.grid.focal = f;
  auto pr = make_pair(spec, 100 + trial);
  FlowParams p = small_params();
  p.lambda_l = trial % 3 == 2 ? 0.0 : 1.0;
  p.lambda_r = trial % 2 ? 0.5 : 0.0;
  p.subpixel = false;
  std::mt19937 rng(trial);
  std::uniform_real_distribution<double> px(0, 15), d(-2, 2);
  std::vector<SparseSeed> seeds;
  for (int k = 0; k < trial % 4; ++k) seeds.push_back({Vec2(px(rng), px(rng)), Vec2(d(rng), d(rng))});
  Mask region = full(16, 16);
  if (trial % 5 == 4)
    for (int x = 0; x < 5; ++x) region(x, 7) = 0;
  const int view = trial % 4;
  const auto& arr = pr.out.sequence.array;
  const FlowField got = estimate_flow_field(arr, view, pr.t0, pr.t1, region, seeds, p);
  const FlowLevel level(arr, view, pr.t0, pr.t1, p);
  const auto want = oracle::brute_flow(level, region, seeds, p);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      if (!region(x, y)) continue;
      ASSERT_EQ(got.step_x(x, y), want.mx(x, y)) << x << "," << y;
      ASSERT_EQ(got.step_y(x, y), want.my(x, y)) << x << "," << y;
      ASSERT_EQ(got.valid(x, y), want.valid(x, y)) << x << "," << y;
    }
}

INSTANTIATE_TEST_SUITE_P(Trials, BruteForceFlow, ::testing::Range(0, 8));

TEST(Estimate, UnregularisedArgminIsAttained) {
  // Without E_R the emitted step is the best candidate of its window, and
  // never worse than the seed initialisation.
  const double z = 2.0, f = 32;
  auto pr = make_pair(test::plane_scene(2, 2, 24, 20, 2, z, Vec3(z / f, 0, 0)), 8);
  FlowParams p = small_params();
  p.lambda_r = 0;
  const std::vector<SparseSeed> seeds = {{Vec2(12, 10), Vec2(1, 0)}};
  const auto& arr = pr.out.sequence.array;
  const FlowField got = estimate_flow_field(arr, 0, pr.t0, pr.t1, full(24, 20), seeds, p);
  const FlowLevel level(arr, 0, pr.t0, pr.t1, p);
  Grid<int> ix(24, 20, 0), iy(24, 20, 0);
  seed_initial_flow(seeds, p.seed_radius, ix, iy);
  for (int y = 0; y < 20; ++y)
    for (int x = 0; x < 24; ++x) {
      const double e = level.data_energy(x, y, got.step_x(x, y), got.step_y(x, y), seeds);
      EXPECT_LE(e, level.data_energy(x, y, ix(x, y), iy(x, y), seeds));
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) EXPECT_LE(e, level.data_energy(x, y, ix(x, y) + dx, iy(x, y) + dy, seeds));
    }
}

TEST(Estimate, SingleViewAblationConsistent) {
  const double z = 2.0, f = 32;
  auto pr = make_pair(test::plane_scene(1, 1, 24, 20, 2, z, Vec3(z / f, 0, 0)), 9);
  FlowParams with = small_params(), without = small_params();
  without.lambda_l = 0;
  const auto& arr = pr.out.sequence.array;
  const FlowField a = estimate_flow_field(arr, 0, pr.t0, pr.t1, full(24, 20), {}, with);
  const FlowField b = estimate_flow_field(arr, 0, pr.t0, pr.t1, full(24, 20), {}, without);
  EXPECT_EQ(a.u, b.u);
  EXPECT_EQ(a.v, b.v);
  EXPECT_EQ(a.valid, b.valid);
}

TEST(Estimate, PyramidRecoversLargerShift) {
  // 5 px per frame with radius 2 needs the coarse levels.
  const double z = 2.0, f = 48;
  auto pr = make_pair(test::plane_scene(3, 3, 48, 40, 2, z, Vec3(5 * z / f, 0, 0)), 10);
  FlowParams p = small_params();
  p.levels = 3;
  const FlowField fl = estimate_flow_field(pr.out.sequence.array, 4, pr.t0, pr.t1, full(48, 40), {}, p);
  const FlowField& truth = pr.out.truth.flow[0][4];
  double sum = 0;
  std::size_t n = 0;
  for (int y = 0; y < 40; ++y)
    for (int x = 0; x < 48; ++x) {
      if (!truth.valid(x, y) || truth.occluded(x, y) || !fl.valid(x, y)) continue;
      sum += (fl.at(x, y) - truth.at(x, y)).norm();
      ++n;
    }
  ASSERT_GT(n, 1000u);
  EXPECT_LT(sum / n, 0.5);
}

TEST(Seeds, NearestWithinRadius) {
  Grid<int> ix(10, 10, 9), iy(10, 10, 9);
  const std::vector<SparseSeed> seeds = {{Vec2(1, 1), Vec2(2.4, -0.6)}, {Vec2(8, 8), Vec2(-3, 0)}};
  seed_initial_flow(seeds, 3.0, ix, iy);
  EXPECT_EQ(ix(1, 1), 2);
  EXPECT_EQ(iy(1, 1), -1);
  EXPECT_EQ(ix(8, 6), -3);
  EXPECT_EQ(ix(5, 1), 0);
  EXPECT_EQ(iy(5, 1), 0);
}

namespace {

FlowField uniform(int w, int h, float u, float v) {
  FlowField f(w, h);
  for (std::size_t i = 0; i < f.u.size(); ++i) {
    f.u[i] = u;
    f.v[i] = v;
    f.valid[i] = 1;
  }
  return f;
}

}  // namespace

TEST(Occlusion, PerfectRoundTrip) {
  Grid<float> rt;
  const Mask m = detect_occlusions(uniform(10, 10, 2, 0), uniform(10, 10, -2, 0), 1.0, &rt);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 8; ++x) {
      EXPECT_EQ(m(x, y), 0);
      EXPECT_EQ(rt(x, y), 0.0f);
    }
  // Landing outside the image counts as occluded.
  EXPECT_EQ(m(9, 0), 1);
}

TEST(Occlusion, BrokenRoundTrip) {
  Grid<float> rt;
  const Mask m = detect_occlusions(uniform(10, 10, 2, 0), uniform(10, 10, 0, 0), 1.0, &rt);
  EXPECT_EQ(m(3, 3), 1);
  EXPECT_FLOAT_EQ(rt(3, 3), 2.0f);
}

TEST(Occlusion, SymmetricUnderRoleSwap) {
  std::mt19937 rng(6);
  std::uniform_int_distribution<int> d(-2, 2);
  FlowField a(12, 12), b(12, 12);
  for (std::size_t i = 0; i < a.u.size(); ++i) {
    a.u[i] = d(rng);
    a.v[i] = d(rng);
    b.u[i] = d(rng);
    b.v[i] = d(rng);
    a.valid[i] = b.valid[i] = 1;
  }
  // Swapping roles gives the occlusion mask of the other field; both are the
  // same definition applied from each side.
  const Mask ab = detect_occlusions(a, b, 1.0), ba = detect_occlusions(b, a, 1.0);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) {
      const int qx = x + static_cast<int>(a.u(x, y)), qy = y + static_cast<int>(a.v(x, y));
      if (!b.valid.contains(qx, qy)) continue;
      const int rx = qx + static_cast<int>(b.u(qx, qy)), ry = qy + static_cast<int>(b.v(qx, qy));
      // A consistent pair seen from a is consistent seen from b.
      if (!ab(x, y) && rx == x && ry == y) {
        EXPECT_EQ(ba(qx, qy), 0);
      }
    }
}

TEST(Occlusion, TwoPlaneSceneAgainstZBuffer) {
  const double zb = 3.0, f = 64;
  auto spec = test::occlusion_scene(3, 3, 64, 48, 2, zb, 1.5, Vec3(3 * 1.5 / f, 0, 0));
  auto pr = make_pair(spec, 12);
  FlowParams p = small_params();
  p.levels = 2;
  p.sigma = 3.0;
  const auto& arr = pr.out.sequence.array;
  const FlowField fwd = estimate_flow_field(arr, 4, pr.t0, pr.t1, full(64, 48), {}, p);
  const FlowField bwd = estimate_flow_field(arr, 4, pr.t1, pr.t0, full(64, 48), {}, p);
  const Mask occ = detect_occlusions(fwd, bwd, p.tau_occ);
  const FlowField& truth = pr.out.truth.flow[0][4];
  // Detections must stay on motion boundaries: within 2 px of the front
  // plane's outline at either frame.
  auto near_edge = [&](int x, int y) {
    for (int f = 0; f < 2; ++f) {
      const LabelMap& ids = pr.out.truth.object_ids[f][4];
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int qx = x + dx, qy = y + dy;
          if (!ids.contains(qx, qy) || !ids.contains(qx + 1, qy) || !ids.contains(qx, qy + 1)) continue;
          if (ids(qx, qy) != ids(qx + 1, qy) || ids(qx, qy) != ids(qx, qy + 1)) return true;
        }
    }
    return false;
  };
  std::size_t tp = 0, fn = 0, stray = 0;
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      const bool t = truth.occluded(x, y), d = occ(x, y);
      tp += t && d;
      fn += t && !d;
      stray += d && !t && !near_edge(x, y);
    }
  ASSERT_GT(tp + fn, 0u);
  const double recall = double(tp) / (tp + fn);
  RecordProperty("recall", std::to_string(recall));
  EXPECT_GE(recall, 0.7);
  EXPECT_EQ(stray, 0u);
}
