#include "lfv/objects.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>
#include <unordered_map>

namespace lfv {

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

struct CellHash {
  std::size_t operator()(const std::tuple<long, long, long>& c) const noexcept {
    const auto [x, y, z] = c;
    return static_cast<std::size_t>(x * 73856093L ^ y * 19349663L ^ z * 83492791L);
  }
};

}  // namespace

std::vector<ObjectCluster> cluster_objects(const PointCloud3D& cloud, double radius, int min_size) {
  if (!(radius > 0)) fail(ErrorCode::InvalidArgument, "radius must be positive");
  if (cloud.empty()) fail(ErrorCode::EmptyCloud, "cannot cluster an empty cloud");

  using Cell = std::tuple<long, long, long>;
  std::unordered_map<Cell, std::vector<std::size_t>, CellHash> grid;
  auto cell_of = [&](const Vec3& p) {
    return Cell{static_cast<long>(std::floor(p.x() / radius)), static_cast<long>(std::floor(p.y() / radius)),
                static_cast<long>(std::floor(p.z() / radius))};
  };
  for (std::size_t i = 0; i < cloud.size(); ++i) grid[cell_of(cloud.points[i])].push_back(i);

  const double r2 = radius * radius;
  DisjointSets sets(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto [cx, cy, cz] = cell_of(cloud.points[i]);
    for (long dx = -1; dx <= 1; ++dx)
      for (long dy = -1; dy <= 1; ++dy)
        for (long dz = -1; dz <= 1; ++dz) {
          auto it = grid.find(Cell{cx + dx, cy + dy, cz + dz});
          if (it == grid.end()) continue;
          for (std::size_t j : it->second)
            if (j > i && (cloud.points[i] - cloud.points[j]).squaredNorm() <= r2) sets.unite(i, j);
        }
  }

  std::unordered_map<std::size_t, std::size_t> root_to_cluster;
  std::vector<ObjectCluster> clusters;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const std::size_t root = sets.find(i);
    auto [it, inserted] = root_to_cluster.emplace(root, clusters.size());
    if (inserted) clusters.emplace_back();
    clusters[it->second].members.push_back(i);
  }
  std::erase_if(clusters, [&](const ObjectCluster& c) { return static_cast<int>(c.members.size()) < min_size; });

  for (auto& c : clusters) {
    c.bbox_min = c.bbox_max = cloud.points[c.members.front()];
    Vec3 sum = Vec3::Zero();
    for (std::size_t i : c.members) {
      const Vec3& p = cloud.points[i];
      c.bbox_min = c.bbox_min.cwiseMin(p);
      c.bbox_max = c.bbox_max.cwiseMax(p);
      sum += p;
    }
    c.centroid = sum / static_cast<double>(c.members.size());
  }
  std::sort(clusters.begin(), clusters.end(), [](const ObjectCluster& a, const ObjectCluster& b) {
    if (a.members.size() != b.members.size()) return a.members.size() > b.members.size();
    return std::lexicographical_compare(a.centroid.data(), a.centroid.data() + 3, b.centroid.data(),
                                        b.centroid.data() + 3);
  });
  for (std::size_t i = 0; i < clusters.size(); ++i) clusters[i].id = static_cast<int>(i);
  return clusters;
}

Mask object_silhouette(const ObjectCluster& cluster, const PointCloud3D& cloud, const CameraCalibration& cam,
                       int view, int width, int height) {
  Mask mask(width, height, 0);
  bool any = false;
  for (std::size_t i : cluster.members) {
    if (!cloud.visible(i, view)) continue;
    const auto proj = try_project(cloud.points[i], cam);
    if (!proj) continue;
    const int cx = static_cast<int>(std::floor(proj->pixel.x() + 0.5));
    const int cy = static_cast<int>(std::floor(proj->pixel.y() + 0.5));
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx)
        if (mask.contains(cx + dx, cy + dy)) {
          mask(cx + dx, cy + dy) = 1;
          any = true;
        }
  }
  if (!any) fail(ErrorCode::NotVisible, "cluster " + std::to_string(cluster.id) + " not visible in view " +
                                            std::to_string(view));
  return close3(mask);
}

void assign_object_ids(PointCloud3D& cloud, const std::vector<ObjectCluster>& clusters) {
  cloud.object_ids.assign(cloud.size(), -1);
  for (const auto& c : clusters)
    for (std::size_t i : c.members) cloud.object_ids[i] = c.id;
}

void associate_clusters(const std::vector<ObjectCluster>& previous, std::vector<ObjectCluster>& current) {
  struct Pair {
    double dist;
    std::size_t prev, cur;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < previous.size(); ++p)
    for (std::size_t c = 0; c < current.size(); ++c)
      pairs.push_back({(previous[p].centroid - current[c].centroid).norm(), p, c});
  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.dist < b.dist; });
  std::vector<bool> prev_used(previous.size(), false), cur_used(current.size(), false);
  std::vector<int> new_ids(current.size(), -1);
  for (const auto& pr : pairs) {
    if (prev_used[pr.prev] || cur_used[pr.cur]) continue;
    prev_used[pr.prev] = cur_used[pr.cur] = true;
    new_ids[pr.cur] = previous[pr.prev].id;
  }
  int next = 0;
  for (const auto& p : previous) next = std::max(next, p.id + 1);
  for (std::size_t c = 0; c < current.size(); ++c)
    current[c].id = new_ids[c] >= 0 ? new_ids[c] : next++;
}

}  // namespace lfv
