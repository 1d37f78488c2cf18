#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "lfv/objects.hpp"
#include "lfv/synthetic.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace lfv;

namespace {

PointCloud3D random_cloud(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  PointCloud3D c;
  for (std::size_t i = 0; i < n; ++i) c.push_back(Vec3(u(rng), u(rng), u(rng)), 1, 0, static_cast<std::int64_t>(i));
  return c;
}

std::vector<std::vector<std::size_t>> partition(const std::vector<ObjectCluster>& cs) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto& c : cs) out.push_back(c.members);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Cluster, TwoSeparatedBlobs) {
  PointCloud3D c;
  for (int i = 0; i < 20; ++i) {
    c.push_back(Vec3(0.01 * i, 0, 2), 1, 0, i);
    c.push_back(Vec3(1 + 0.01 * i, 0, 2), 1, 0, 100 + i);
  }
  EXPECT_EQ(cluster_objects(c, 0.1, 1).size(), 2u);
}

TEST(Cluster, SinglePointSingleton) {
  PointCloud3D c;
  c.push_back(Vec3(0, 0, 1), 1, 0, 0);
  const auto cs = cluster_objects(c, 0.1, 1);
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_EQ(cs[0].members, std::vector<std::size_t>{0});
}

TEST(Cluster, Errors) {
  EXPECT_THROW(cluster_objects(PointCloud3D{}, 0.1, 1), Error);
  EXPECT_THROW(cluster_objects(random_cloud(3, 1), 0.0, 1), Error);
}

class ClusterOracle : public ::testing::TestWithParam<double> {};

TEST_P(ClusterOracle, MatchesBruteForceComponents) {
  const PointCloud3D c = random_cloud(500, 17);
  for (int min_size : {1, 3, 10}) {
    const auto got = partition(cluster_objects(c, GetParam(), min_size));
    EXPECT_EQ(got, oracle::components(c.points, GetParam(), min_size));
  }
}

INSTANTIATE_TEST_SUITE_P(Radii, ClusterOracle, ::testing::Values(0.03, 0.06, 0.1, 0.2));

TEST(Cluster, IdsOrderedBySizeThenCentroid) {
  const auto cs = cluster_objects(random_cloud(400, 5), 0.08, 1);
  for (std::size_t i = 0; i < cs.size(); ++i) {
    EXPECT_EQ(cs[i].id, static_cast<int>(i));
    EXPECT_TRUE(std::is_sorted(cs[i].members.begin(), cs[i].members.end()));
    if (i == 0) continue;
    ASSERT_GE(cs[i - 1].members.size(), cs[i].members.size());
    if (cs[i - 1].members.size() == cs[i].members.size()) {
      EXPECT_TRUE(std::lexicographical_compare(cs[i - 1].centroid.data(), cs[i - 1].centroid.data() + 3,
                                               cs[i].centroid.data(), cs[i].centroid.data() + 3));
    }
  }
}

TEST(Cluster, PermutationInvariant) {
  const PointCloud3D c = random_cloud(300, 8);
  std::vector<std::size_t> perm(c.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937(2));
  PointCloud3D shuffled;
  for (std::size_t i : perm) shuffled.push_back(c.points[i], 1, 0, c.point_ids[i]);
  auto by_id = [](const PointCloud3D& cloud, const std::vector<ObjectCluster>& cs) {
    std::vector<std::vector<std::int64_t>> out;
    for (const auto& cl : cs) {
      auto& ids = out.emplace_back();
      for (std::size_t m : cl.members) ids.push_back(cloud.point_ids[m]);
      std::sort(ids.begin(), ids.end());
    }
    return out;
  };
  EXPECT_EQ(by_id(c, cluster_objects(c, 0.09, 2)), by_id(shuffled, cluster_objects(shuffled, 0.09, 2)));
}

TEST(Cluster, MonotoneInRadius) {
  const PointCloud3D c = random_cloud(300, 12);
  std::size_t last = c.size() + 1;
  for (double r = 0.02; r < 0.3; r += 0.02) {
    const std::size_t n = cluster_objects(c, r, 1).size();
    EXPECT_LE(n, last);
    last = n;
  }
}

TEST(Cluster, PartitionIsDisjointAndCovering) {
  const PointCloud3D c = random_cloud(300, 3);
  const auto cs = cluster_objects(c, 0.1, 1);
  std::vector<int> seen(c.size(), 0);
  for (const auto& cl : cs)
    for (std::size_t m : cl.members) ++seen[m];
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(Cluster, AssignIdsMarksNoise) {
  PointCloud3D c = random_cloud(50, 4);
  const auto cs = cluster_objects(c, 0.05, 3);
  assign_object_ids(c, cs);
  for (std::size_t i = 0; i < c.size(); ++i) {
    int expect = -1;
    for (const auto& cl : cs)
      if (std::binary_search(cl.members.begin(), cl.members.end(), i)) expect = cl.id;
    EXPECT_EQ(c.object_ids[i], expect);
  }
}

TEST(Cluster, AssociationFollowsNearestCentroid) {
  std::vector<ObjectCluster> prev(2), cur(3);
  prev[0].id = 0;
  prev[0].centroid = Vec3(0, 0, 2);
  prev[1].id = 4;
  prev[1].centroid = Vec3(1, 0, 2);
  cur[0].centroid = Vec3(1.05, 0, 2);
  cur[1].centroid = Vec3(0.02, 0, 2);
  cur[2].centroid = Vec3(5, 0, 2);
  associate_clusters(prev, cur);
  EXPECT_EQ(cur[0].id, 4);
  EXPECT_EQ(cur[1].id, 0);
  EXPECT_EQ(cur[2].id, 5);
}

TEST(Silhouette, MatchesGroundTruthObjectIds) {
  const auto out = generate_synthetic(test::occlusion_scene(2, 2, 64, 48, 1, 3.0, 1.5, Vec3::Zero()), 2);
  const auto& fr = out.sequence.frames[0];
  std::vector<std::size_t> front;
  for (std::size_t i = 0; i < fr.cloud.size(); ++i)
    if (fr.cloud.object_ids[i] == 0) front.push_back(i);
  ObjectCluster cl;
  cl.members = front;
  for (int v = 0; v < 4; ++v) {
    const Mask m = object_silhouette(cl, fr.cloud, out.sequence.array.camera(v), v, 64, 48);
    // Silhouettes are dilated by one pixel, so compare against the truth
    // grown by the same amount and require full coverage of the truth.
    const LabelMap& truth = out.truth.object_ids[0][v];
    auto front_at = [&](int x, int y) { return truth.contains(x, y) && truth(x, y) == 0; };
    std::size_t inter = 0, uni = 0, covered = 0, area = 0;
    for (int y = 0; y < 48; ++y)
      for (int x = 0; x < 64; ++x) {
        bool grown = false;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) grown = grown || front_at(x + dx, y + dy);
        const bool a = m(x, y) != 0;
        inter += a && grown;
        uni += a || grown;
        area += front_at(x, y);
        covered += a && front_at(x, y);
      }
    ASSERT_GT(uni, 0u);
    EXPECT_GE(static_cast<double>(inter) / uni, 0.9) << "view " << v;
    EXPECT_GE(static_cast<double>(covered) / area, 0.98) << "view " << v;
  }
}

TEST(Silhouette, HiddenClusterIsNotVisible) {
  PointCloud3D c;
  c.push_back(Vec3(0, 0, -1), 0, 0, 0);
  ObjectCluster cl;
  cl.members = {0};
  CameraCalibration cam;
  cam.intrinsics << 10, 0, 5, 0, 10, 5, 0, 0, 1;
  try {
    object_silhouette(cl, c, cam, 0, 10, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotVisible);
  }
}
