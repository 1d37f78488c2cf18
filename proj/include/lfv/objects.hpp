#pragma once

#include <vector>

#include "lfv/pointcloud.hpp"

namespace lfv {

struct ObjectCluster {
  int id = 0;
  std::vector<std::size_t> members;  // indices into the source cloud, ascending
  Vec3 bbox_min = Vec3::Zero();
  Vec3 bbox_max = Vec3::Zero();
  Vec3 centroid = Vec3::Zero();
};

// Single-linkage Euclidean clustering: connected components of the graph
// joining points closer than `radius`. Components smaller than `min_size`
// are dropped as noise. Ids follow (size desc, centroid lexicographic).
std::vector<ObjectCluster> cluster_objects(const PointCloud3D& cloud, double radius, int min_size);

// Projected members that are visible in `view`, each dilated to a 3x3 block,
// followed by one 3x3 closing. Throws NotVisible when no member is visible.
Mask object_silhouette(const ObjectCluster& cluster, const PointCloud3D& cloud,
                       const CameraCalibration& cam, int view, int width, int height);

// Writes cluster ids into cloud.object_ids (-1 for noise points).
void assign_object_ids(PointCloud3D& cloud, const std::vector<ObjectCluster>& clusters);

// Relabels `current` so that each cluster takes the id of the nearest
// previous-frame centroid (greedy by distance); unmatched clusters get fresh
// ids above every previous id.
void associate_clusters(const std::vector<ObjectCluster>& previous, std::vector<ObjectCluster>& current);

}  // namespace lfv
