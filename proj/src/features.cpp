#include "lfv/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace lfv {

std::optional<Descriptor> compute_descriptor(const Image& gray, const Vec2& anchor) {
  constexpr int kPatch = 16;
  constexpr int kGrid = kPatch + 2;
  std::array<float, kGrid * kGrid> patch;
  for (int j = 0; j < kGrid; ++j)
    for (int i = 0; i < kGrid; ++i) {
      const double x = anchor.x() + (i - (kGrid - 1) / 2.0);
      const double y = anchor.y() + (j - (kGrid - 1) / 2.0);
      if (!gray.sample(x, y, 0, patch[j * kGrid + i])) return std::nullopt;
    }

  Descriptor desc{};
  const double sigma = 0.5 * kPatch;
  for (int j = 0; j < kPatch; ++j)
    for (int i = 0; i < kPatch; ++i) {
      const int gi = i + 1, gj = j + 1;
      const double gx = 0.5 * (patch[gj * kGrid + gi + 1] - patch[gj * kGrid + gi - 1]);
      const double gy = 0.5 * (patch[(gj + 1) * kGrid + gi] - patch[(gj - 1) * kGrid + gi]);
      const double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      const double dx = i - (kPatch - 1) / 2.0, dy = j - (kPatch - 1) / 2.0;
      const double weight = mag * std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
      const double bin = (std::atan2(gy, gx) + std::numbers::pi) / (2 * std::numbers::pi) * 8.0;
      const int b0 = static_cast<int>(std::floor(bin)) % 8;
      const int b1 = (b0 + 1) % 8;
      const double frac = bin - std::floor(bin);
      const int cell = (j / 4) * 4 + (i / 4);
      desc[cell * 8 + b0] += static_cast<float>(weight * (1 - frac));
      desc[cell * 8 + b1] += static_cast<float>(weight * frac);
    }
  double norm = 0.0;
  for (float v : desc) norm += static_cast<double>(v) * v;
  norm = std::sqrt(norm);
  if (norm < 1e-9) return std::nullopt;
  for (auto& v : desc) v = static_cast<float>(v / norm);
  return desc;
}

namespace {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

FeatureSet extract_features(const Image& gray, const PointCloud3D& cloud, const ObjectCluster& cluster,
                            const CameraCalibration& cam, int view, int frame, std::size_t max_features) {
  std::vector<std::size_t> visible;
  for (std::size_t i : cluster.members)
    if (cloud.visible(i, view)) visible.push_back(i);
  if (visible.empty())
    fail(ErrorCode::NotVisible, "object " + std::to_string(cluster.id) + " not visible in view " + std::to_string(view));

  // Anchors whose patch fits inside the image.
  constexpr double kReach = 8.5;
  std::vector<std::pair<std::size_t, Vec2>> anchors;
  for (std::size_t i : visible) {
    const auto proj = try_project(cloud.points[i], cam);
    if (!proj) continue;
    const Vec2& p = proj->pixel;
    if (p.x() - kReach < 0 || p.y() - kReach < 0 || p.x() + kReach > gray.width() - 1 ||
        p.y() + kReach > gray.height() - 1)
      continue;
    anchors.emplace_back(i, p);
  }
  // Subsample by a hash of the point id so that the same surface points are
  // kept in every frame and view.
  if (max_features > 0 && anchors.size() > max_features) {
    auto rank = [&](const std::pair<std::size_t, Vec2>& a) {
      return std::make_pair(mix64(static_cast<std::uint64_t>(cloud.point_ids[a.first])), a.first);
    };
    std::nth_element(anchors.begin(), anchors.begin() + static_cast<std::ptrdiff_t>(max_features), anchors.end(),
                     [&](const auto& a, const auto& b) { return rank(a) < rank(b); });
    anchors.resize(max_features);
    std::sort(anchors.begin(), anchors.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  FeatureSet set{view, frame, cluster.id, {}};
  for (const auto& [i, p] : anchors) {
    auto desc = compute_descriptor(gray, p);
    if (!desc) continue;
    set.features.push_back(Feature{p, *desc, cloud.point_ids[i], i});
  }
  return set;
}

double descriptor_distance(const Descriptor& a, const Descriptor& b) noexcept {
  double sum = 0.0;
  for (int k = 0; k < kDescriptorSize; ++k) {
    const double d = static_cast<double>(a[k]) - b[k];
    sum += d * d;
  }
  return std::sqrt(sum);
}

MatchSet match_features(const FeatureSet& a, const FeatureSet& b, double ratio) {
  if (!(ratio > 0 && ratio < 1)) fail(ErrorCode::InvalidArgument, "ratio must lie in (0,1)");
  MatchSet out{a.view, a.frame, b.frame, {}};
  const std::size_t na = a.size(), nb = b.size();
  if (na == 0 || nb < 2) return out;

  std::vector<double> dist(na * nb);
  for (std::size_t i = 0; i < na; ++i)
    for (std::size_t j = 0; j < nb; ++j)
      dist[i * nb + j] = descriptor_distance(a.features[i].descriptor, b.features[j].descriptor);

  // Nearest A feature for every B feature, for the symmetry test.
  std::vector<std::size_t> back(nb, 0);
  for (std::size_t j = 0; j < nb; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < na; ++i)
      if (dist[i * nb + j] < best) {
        best = dist[i * nb + j];
        back[j] = i;
      }
  }

  for (std::size_t i = 0; i < na; ++i) {
    double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
    std::size_t best = 0;
    for (std::size_t j = 0; j < nb; ++j) {
      const double d = dist[i * nb + j];
      if (d < d1) {
        d2 = d1;
        d1 = d;
        best = j;
      } else if (d < d2) {
        d2 = d;
      }
    }
    if (!(d2 > 0) || !(d1 / d2 < ratio)) continue;
    if (back[best] != i) continue;
    out.matches.push_back(Match{i, best, d1});
  }
  return out;
}

MatchSet filter_spatial_coherence(const MatchSet& matches, const FeatureSet& a, const FeatureSet& b, int m,
                                  CoherenceRule rule) {
  if (m < 1 || m % 2 == 0) fail(ErrorCode::InvalidArgument, "coherence window must be odd");
  const double half = m / 2;
  MatchSet out{matches.view, matches.frame_a, matches.frame_b, {}};
  const std::size_t n = matches.size();
  std::vector<Vec2> src(n), disp(n);
  for (std::size_t k = 0; k < n; ++k) {
    src[k] = a.features.at(matches.matches[k].a).pixel;
    disp[k] = b.features.at(matches.matches[k].b).pixel - src[k];
  }
  for (std::size_t k = 0; k < n; ++k) {
    std::vector<std::size_t> window;
    for (std::size_t q = 0; q < n; ++q)
      if (std::abs(src[q].x() - src[k].x()) <= half && std::abs(src[q].y() - src[k].y()) <= half)
        window.push_back(q);
    if (window.size() <= 1) {
      out.matches.push_back(matches.matches[k]);
      continue;
    }
    bool keep = false;
    if (rule == CoherenceRule::DisplacementMagnitude) {
      double mean = 0.0;
      for (std::size_t q : window) mean += disp[q].norm();
      mean /= static_cast<double>(window.size());
      keep = disp[k].norm() <= 2.0 * mean;
    } else {
      Vec2 mean_vec = Vec2::Zero();
      for (std::size_t q : window) mean_vec += disp[q];
      mean_vec /= static_cast<double>(window.size());
      double mean_dev = 0.0;
      for (std::size_t q : window) mean_dev += (disp[q] - mean_vec).norm();
      mean_dev /= static_cast<double>(window.size());
      keep = (disp[k] - mean_vec).norm() <= 2.0 * mean_dev;
    }
    if (keep) out.matches.push_back(matches.matches[k]);
  }
  return out;
}

MatchSet match_keyframes(const FeatureSet& key_a, const FeatureSet& key_b, const MatchParams& params) {
  return filter_spatial_coherence(match_features(key_a, key_b, params.ratio), key_a, key_b,
                                  params.coherence_window, params.rule);
}

namespace {

FeatureSet subset(const FeatureSet& set, const std::vector<std::size_t>& keep) {
  FeatureSet out{set.view, set.frame, set.object, {}};
  for (std::size_t i : keep) out.features.push_back(set.features[i]);
  return out;
}

}  // namespace

TrackSet build_tracks(std::span<const FeatureSet> segment, const MatchParams& params, int first_id) {
  if (segment.empty()) fail(ErrorCode::EmptySegment, "segment has no frames");
  const FeatureSet& key = segment[0];
  const std::size_t n = segment.size();
  std::vector<std::vector<bool>> used(n);
  for (std::size_t f = 0; f < n; ++f) used[f].assign(segment[f].size(), false);

  TrackSet out;
  int next_id = first_id;
  auto observe = [](Track& t, const FeatureSet& set, std::size_t idx) {
    const Feature& f = set.features[idx];
    t.observations[set.frame] = TrackObservation{f.pixel, f.point_id};
  };

  // Key-frame against every frame of the segment.
  std::vector<Track> key_tracks(key.size());
  for (std::size_t j = 1; j < n; ++j) {
    const MatchSet ms = match_keyframes(key, segment[j], params);
    for (const auto& m : ms.matches) {
      observe(key_tracks[m.a], segment[j], m.b);
      used[j][m.b] = true;
    }
  }
  for (std::size_t a = 0; a < key.size(); ++a) {
    Track& t = key_tracks[a];
    if (t.observations.empty()) continue;
    observe(t, key, a);
    used[0][a] = true;
    t.id = next_id++;
    t.keyframe = key.frame;
    t.view = key.view;
    t.object = key.object;
    out.tracks.push_back(std::move(t));
  }

  // Points that appear after the key-frame start new tracks of the same segment.
  for (std::size_t j = 1; j + 1 < n; ++j) {
    std::vector<std::size_t> free_j;
    for (std::size_t i = 0; i < segment[j].size(); ++i)
      if (!used[j][i]) free_j.push_back(i);
    if (free_j.empty()) continue;
    const FeatureSet anchors = subset(segment[j], free_j);
    std::vector<Track> fresh(anchors.size());
    for (std::size_t k = j + 1; k < n; ++k) {
      std::vector<std::size_t> free_k;
      for (std::size_t i = 0; i < segment[k].size(); ++i)
        if (!used[k][i]) free_k.push_back(i);
      const FeatureSet targets = subset(segment[k], free_k);
      const MatchSet ms = match_keyframes(anchors, targets, params);
      for (const auto& m : ms.matches) {
        observe(fresh[m.a], targets, m.b);
        used[k][free_k[m.b]] = true;
      }
    }
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      Track& t = fresh[a];
      if (t.observations.empty()) continue;
      observe(t, anchors, a);
      used[j][free_j[a]] = true;
      t.id = next_id++;
      t.keyframe = key.frame;
      t.view = key.view;
      t.object = key.object;
      out.tracks.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace lfv
