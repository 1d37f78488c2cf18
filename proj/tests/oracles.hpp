#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They follow the documented rules directly and favour obviousness
// over speed; none of them calls the routine it checks.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "lfv/features.hpp"
#include "lfv/flow.hpp"

namespace lfv::oracle {

// pixel = K (R X + t) / z, written out component by component.
inline Vec2 project(const Vec3& X, const CameraCalibration& cam) {
  double c[3];
  for (int r = 0; r < 3; ++r)
    c[r] = cam.rotation(r, 0) * X.x() + cam.rotation(r, 1) * X.y() + cam.rotation(r, 2) * X.z() + cam.translation[r];
  const double x = c[0] / c[2], y = c[1] / c[2];
  const Mat3& K = cam.intrinsics;
  return {K(0, 0) * x + K(0, 1) * y + K(0, 2), K(1, 1) * y + K(1, 2)};
}

inline double l2(const Descriptor& a, const Descriptor& b) {
  double s = 0;
  for (int i = 0; i < kDescriptorSize; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return std::sqrt(s);
}

// Ratio test d1 / d2 < ratio in the A -> B direction, then the B -> A nearest
// neighbour must point back. Ties go to the lowest index.
inline std::vector<Match> brute_match(const FeatureSet& a, const FeatureSet& b, double ratio) {
  std::vector<Match> out;
  if (b.size() < 2) return out;
  auto nearest_in_b = [&](std::size_t i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < b.size(); ++j) d.push_back({l2(a.features[i].descriptor, b.features[j].descriptor), j});
    std::stable_sort(d.begin(), d.end(), [](auto& x, auto& y) { return x.first < y.first; });
    return d;
  };
  auto nearest_in_a = [&](std::size_t j) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.size(); ++i) {
      const double d = l2(a.features[i].descriptor, b.features[j].descriptor);
      if (d < bd) {
        bd = d;
        best = i;
      }
    }
    return best;
  };
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto d = nearest_in_b(i);
    const double d1 = d[0].first, d2 = d[1].first;
    if (d2 == 0 || !(d1 / d2 < ratio)) continue;
    if (nearest_in_a(d[0].second) != i) continue;
    out.push_back({i, d[0].second, d1});
  }
  return out;
}

// Connected components of the "within radius" graph, by union-find over
// every pair. Components are returned as sorted member lists, sorted.
inline std::vector<std::vector<std::size_t>> components(const std::vector<Vec3>& pts, double radius, int min_size) {
  std::vector<std::size_t> parent(pts.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = i + 1; j < pts.size(); ++j)
      if ((pts[i] - pts[j]).norm() <= radius) parent[find(i)] = find(j);
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < pts.size(); ++i) groups[find(i)].push_back(i);
  std::vector<std::vector<std::size_t>> out;
  for (auto& [_, g] : groups)
    if (static_cast<int>(g.size()) >= min_size) out.push_back(g);
  std::sort(out.begin(), out.end());
  return out;
}

// E_R written out from its definition.
inline double regulariser(int mx, int my, const std::vector<NeighbourState>& hood, const FlowParams& p) {
  if (hood.empty()) return 0;
  double sl = 0, sc = 0, ml = std::numeric_limits<double>::infinity(), mc = ml;
  for (const auto& q : hood) {
    sl += q.e_l;
    sc += q.e_c;
    ml = std::min(ml, q.e_l);
    mc = std::min(mc, q.e_c);
  }
  const double n = static_cast<double>(hood.size());
  const double w = p.lambda_rl * (sl / n - ml) + p.lambda_rc * (sc / n - mc);
  double spread = 0;
  for (const auto& q : hood) spread += double(mx - q.mx) * (mx - q.mx) + double(my - q.my) * (my - q.my);
  return spread * w;
}

struct BruteFlow {
  Grid<int> mx, my;
  Mask valid;
};

// Exhaustive single-level minimiser: every candidate of the (2r+1)^2 window
// around the nearest-seed initialisation is scored with the public energy
// terms; the regularised update is a Jacobi sweep over the region with the
// 3x3 neighbourhood (p included). Order: energy, |m|^2, mx, my.
inline BruteFlow brute_flow(const FlowLevel& level, const Mask& region, std::span<const SparseSeed> seeds,
                            const FlowParams& p) {
  const int w = level.width(), h = level.height(), r = p.search_radius;
  Grid<int> ix(w, h, 0), iy(w, h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& s : seeds) {
        const double d2 = (s.pixel - Vec2(x, y)).squaredNorm();
        if (d2 <= p.seed_radius * p.seed_radius && d2 < best) {
          best = d2;
          ix(x, y) = static_cast<int>(std::lround(s.displacement.x()));
          iy(x, y) = static_cast<int>(std::lround(s.displacement.y()));
        }
      }
    }

  struct Cand {
    int mx, my;
    double data, e_l, e_c;
    bool inside;
  };
  std::map<int, std::vector<Cand>> cands;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!region(x, y)) continue;
      auto& list = cands[y * w + x];
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          Cand c;
          c.mx = ix(x, y) + dx;
          c.my = iy(x, y) + dy;
          c.data = level.data_energy(x, y, c.mx, c.my, seeds);
          c.e_l = p.lambda_l > 0 ? level.light_field_energy(x, y, c.mx, c.my) : 0.0;
          const AppearanceEnergy a = level.appearance_energy(x, y, c.mx, c.my, seeds);
          c.e_c = a.temporal + a.view;
          c.inside = x + c.mx >= 0 && y + c.my >= 0 && x + c.mx < w && y + c.my < h;
          list.push_back(c);
        }
    }

  auto pick = [](const std::vector<Cand>& list, const std::vector<double>& total) {
    std::size_t b = 0;
    for (std::size_t k = 1; k < list.size(); ++k) {
      const auto& c = list[k];
      const auto& o = list[b];
      const int n = c.mx * c.mx + c.my * c.my, bn = o.mx * o.mx + o.my * o.my;
      if (total[k] < total[b] || (total[k] == total[b] && (n < bn || (n == bn && (c.mx < o.mx || (c.mx == o.mx && c.my < o.my))))))
        b = k;
    }
    return b;
  };

  std::map<int, std::size_t> best;
  for (auto& [k, list] : cands) {
    std::vector<double> t;
    for (const auto& c : list) t.push_back(c.data);
    best[k] = pick(list, t);
  }
  if (p.lambda_r > 0)
    for (int it = 0; it < p.iterations; ++it) {
      std::map<int, std::size_t> next;
      for (auto& [k, list] : cands) {
        const int x = k % w, y = k / w;
        std::vector<NeighbourState> hood;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int qx = x + dx, qy = y + dy;
            if (qx < 0 || qy < 0 || qx >= w || qy >= h || !region(qx, qy)) continue;
            const Cand& q = cands.at(qy * w + qx)[best.at(qy * w + qx)];
            hood.push_back({q.mx, q.my, q.e_l, q.e_c});
          }
        std::vector<double> t;
        for (const auto& c : list) t.push_back(c.data + p.lambda_r * regulariser(c.mx, c.my, hood, p));
        next[k] = pick(list, t);
      }
      best = next;
    }

  BruteFlow out{Grid<int>(w, h, 0), Grid<int>(w, h, 0), Mask(w, h, 0)};
  for (auto& [k, list] : cands) {
    const Cand& c = list[best[k]];
    out.mx[k] = c.mx;
    out.my[k] = c.my;
    out.valid[k] = c.inside && c.e_l < kEnergySentinel && c.e_c < kEnergySentinel;
  }
  return out;
}

}  // namespace lfv::oracle
