#include "lfv/flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lfv {

void FlowParams::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::InvalidArgument, std::string("flow: ") + what);
  };
  require(lambda_l >= 0 && lambda_c >= 0 && lambda_r >= 0 && lambda_rl >= 0 && lambda_rc >= 0,
          "weights must be non-negative");
  require(search_radius >= 0, "search radius must be non-negative");
  require(levels >= 1, "levels must be at least 1");
  require(scale > 0 && scale < 1, "scale must lie in (0, 1)");
  require(iterations >= 0, "iterations must be non-negative");
  require(tau_occ >= 0, "occlusion threshold must be non-negative");
  require(sparse_radius >= 0 && seed_radius >= 0, "radii must be non-negative");
  require(c_inf > 0, "c_inf must be positive");
  require(sigma > 0 && d_ref > 0, "window sigma and reference depth must be positive");
}

FlowFrame make_flow_frame(const LightFieldFrame& frame) {
  FlowFrame out;
  for (const auto& v : frame.views) out.views.push_back(to_luma(v));
  out.depths = frame.depths;
  return out;
}

FlowFrame downsample_frame(const FlowFrame& frame, double scale) {
  FlowFrame out;
  for (const auto& v : frame.views) out.views.push_back(downsample(v, scale));
  for (std::size_t i = 0; i < frame.depths.size(); ++i)
    out.depths.push_back(downsample_depth(frame.depths[i], out.views[i].width(), out.views[i].height()));
  return out;
}

double regularization_energy(int mx, int my, std::span<const NeighbourState> neighbours, const FlowParams& params) {
  if (neighbours.empty()) return 0.0;
  double mean_l = 0, mean_c = 0;
  double min_l = std::numeric_limits<double>::infinity(), min_c = min_l;
  for (const auto& q : neighbours) {
    mean_l += q.e_l;
    mean_c += q.e_c;
    min_l = std::min(min_l, q.e_l);
    min_c = std::min(min_c, q.e_c);
  }
  const double n = static_cast<double>(neighbours.size());
  mean_l /= n;
  mean_c /= n;
  const double weight = params.lambda_rl * (mean_l - min_l) + params.lambda_rc * (mean_c - min_c);
  double spread = 0;
  for (const auto& q : neighbours) {
    const double dx = mx - q.mx, dy = my - q.my;
    spread += dx * dx + dy * dy;
  }
  return spread * weight;
}

namespace {

double combine(const FlowParams& p, double e_l, double temporal, double view, double sparse) {
  return p.lambda_l * e_l + p.lambda_c * (temporal + view + sparse);
}

}  // namespace

FlowLevel::FlowLevel(const CameraArray& array, int view, const FlowFrame& t0, const FlowFrame& t1,
                     const FlowParams& params, double pixel_scale)
    : t0_(&t0), t1_(&t1), params_(params), view_(view), num_views_(array.size()) {
  if (static_cast<int>(t0.views.size()) != array.size() || static_cast<int>(t1.views.size()) != array.size() ||
      t0.depths.size() != t0.views.size() || t1.depths.size() != t1.views.size())
    fail(ErrorCode::InvalidArgument, "flow frames must hold one image and depth per view");
  if (view < 0 || view >= array.size()) fail(ErrorCode::InvalidArgument, "flow view out of range");
  layout_ = window_layout(array, view, WindowParams{params.sigma, params.d_ref}, pixel_scale);
  shears_ = view_shears(array, view, params.d_ref, pixel_scale);
}

std::size_t FlowLevel::window_size() const noexcept { return layout_.views.size() * layout_.kernel.size(); }

double FlowLevel::source_depth(int x, int y) const { return t0_->depths[view_](x, y); }

bool FlowLevel::has_target_depth(int qx, int qy) const { return t1_->depths[view_](qx, qy) > 0; }

double FlowLevel::landing_depth(int x, int y, int qx, int qy) const {
  const double d = t1_->depths[view_](qx, qy);
  return d > 0 ? d : source_depth(x, y);
}

void FlowLevel::source_window(int x, int y, float* out) const {
  fill_window(t0_->views, layout_, source_depth(x, y), Vec2(x, y), out);
}

void FlowLevel::target_window(int qx, int qy, double depth, float* out) const {
  fill_window(t1_->views, layout_, depth, Vec2(qx, qy), out);
}

double FlowLevel::light_field_energy(const float* source, const float* target) const {
  if (num_views_ == 1) return 0.0;
  const double d = window_distance(source, target, layout_);
  return std::isnan(d) ? kEnergySentinel : d;
}

double FlowLevel::light_field_energy(int x, int y, int mx, int my) const {
  if (num_views_ == 1) return 0.0;
  const int qx = x + mx, qy = y + my;
  if (!t1_->depths[view_].contains(qx, qy)) return kEnergySentinel;
  std::vector<float> a(window_size()), b(window_size());
  source_window(x, y, a.data());
  target_window(qx, qy, landing_depth(x, y, qx, qy), b.data());
  return light_field_energy(a.data(), b.data());
}

double FlowLevel::appearance_terms(int x, int y, int mx, int my, double& temporal, double& view) const {
  const int qx = x + mx, qy = y + my;
  if (!t1_->depths[view_].contains(qx, qy)) {
    temporal = view = kEnergySentinel;
    return temporal + view;
  }
  double inv0 = 0, inv1 = 0;
  if (params_.compensate_disparity) {
    const double d0 = source_depth(x, y), d1 = landing_depth(x, y, qx, qy);
    inv0 = d0 > 0 ? 1.0 / normalized_depth(d0, params_.d_ref) : 0.0;
    inv1 = d1 > 0 ? 1.0 / normalized_depth(d1, params_.d_ref) : 0.0;
  }
  const float ref = t0_->views[view_].at(x, y);
  double sum_t = 0, sum_v = 0;
  int n_t = 0, n_v = 0;
  for (int i = 0; i < num_views_; ++i) {
    float a, b;
    const bool ok_b = t1_->views[i].sample(qx - shears_[i].x() * inv1, qy - shears_[i].y() * inv1, 0, b);
    if (!ok_b) continue;
    if (t0_->views[i].sample(x - shears_[i].x() * inv0, y - shears_[i].y() * inv0, 0, a)) {
      const double d = static_cast<double>(a) - b;
      sum_t += d * d;
      ++n_t;
    }
    if (i != view_) {
      const double d = static_cast<double>(ref) - b;
      sum_v += d * d;
      ++n_v;
    }
  }
  temporal = n_t ? sum_t / n_t : kEnergySentinel;
  view = num_views_ == 1 ? 0.0 : (n_v ? sum_v / n_v : kEnergySentinel);
  return temporal + view;
}

double FlowLevel::sparse_energy(int x, int y, int mx, int my, std::span<const SparseSeed> seeds) const {
  const double r2 = params_.sparse_radius * params_.sparse_radius;
  bool near = false;
  for (const auto& s : seeds) {
    if ((s.pixel - Vec2(x, y)).squaredNorm() > r2) continue;
    near = true;
    if ((s.displacement - Vec2(mx, my)).squaredNorm() <= r2) return 0.0;
  }
  return near ? params_.c_inf : 0.0;
}

AppearanceEnergy FlowLevel::appearance_energy(int x, int y, int mx, int my, std::span<const SparseSeed> seeds) const {
  AppearanceEnergy e;
  appearance_terms(x, y, mx, my, e.temporal, e.view);
  e.sparse = sparse_energy(x, y, mx, my, seeds);
  return e;
}

double FlowLevel::data_energy(int x, int y, int mx, int my, std::span<const SparseSeed> seeds) const {
  const double e_l = light_field_energy(x, y, mx, my);
  const AppearanceEnergy c = appearance_energy(x, y, mx, my, seeds);
  return combine(params_, e_l, c.temporal, c.view, c.sparse);
}

void seed_initial_flow(std::span<const SparseSeed> seeds, double radius, Grid<int>& init_x, Grid<int>& init_y) {
  const double r2 = radius * radius;
  for (int y = 0; y < init_x.height(); ++y)
    for (int x = 0; x < init_x.width(); ++x) {
      double best = std::numeric_limits<double>::infinity();
      const SparseSeed* pick = nullptr;
      for (const auto& s : seeds) {
        const double d2 = (s.pixel - Vec2(x, y)).squaredNorm();
        if (d2 <= r2 && d2 < best) {
          best = d2;
          pick = &s;
        }
      }
      init_x(x, y) = pick ? static_cast<int>(std::lround(pick->displacement.x())) : 0;
      init_y(x, y) = pick ? static_cast<int>(std::lround(pick->displacement.y())) : 0;
    }
}

namespace {

// Lowest energy, then smallest |m|, then lexicographic (mx, my).
bool better(double e, int mx, int my, double be, int bx, int by) {
  if (e != be) return e < be;
  const int n = mx * mx + my * my, bn = bx * bx + by * by;
  if (n != bn) return n < bn;
  if (mx != bx) return mx < bx;
  return my < by;
}

double parabolic_offset(double em, double e0, double ep) {
  const double denom = em - 2 * e0 + ep;
  if (!(denom > 0)) return 0.0;
  return std::clamp(0.5 * (em - ep) / denom, -0.5, 0.5);
}

}  // namespace

FlowField estimate_flow_level(const FlowLevel& level, const Mask& region, const Grid<int>& init_x,
                              const Grid<int>& init_y, std::span<const SparseSeed> seeds, const FlowParams& params,
                              bool finest) {
  const int w = level.width(), h = level.height();
  if (region.width() != w || region.height() != h || init_x.width() != w || init_x.height() != h)
    fail(ErrorCode::InvalidArgument, "flow level inputs differ in size");
  FlowField out(w, h);
  out.view = level.view();

  std::vector<int> pixels;
  for (int i = 0; i < w * h; ++i)
    if (region[i]) pixels.push_back(i);
  const std::size_t np = pixels.size();
  if (np == 0) return out;

  const int r = params.search_radius, side = 2 * r + 1;
  const std::size_t nc = static_cast<std::size_t>(side) * side;
  const bool use_l = params.lambda_l > 0;

  // Seeds within the sparse radius of each pixel.
  std::vector<std::vector<SparseSeed>> near(np);
  const double r2 = params.sparse_radius * params.sparse_radius;
  for (std::size_t k = 0; k < np; ++k) {
    const Vec2 p(pixels[k] % w, pixels[k] / w);
    for (const auto& s : seeds)
      if ((s.pixel - p).squaredNorm() <= r2) near[k].push_back(s);
  }

  // Target windows, one per landing pixel that has its own depth.
  const std::size_t wsize = level.window_size();
  Grid<int> slot(w, h, -1);
  std::vector<int> landings;
  if (use_l) {
    for (std::size_t k = 0; k < np; ++k) {
      const int x = pixels[k] % w, y = pixels[k] / w;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int qx = x + init_x(x, y) + dx, qy = y + init_y(x, y) + dy;
          if (slot.contains(qx, qy)) slot(qx, qy) = -2;
        }
    }
    for (int i = 0; i < w * h; ++i)
      if (slot[i] == -2) {
        slot[i] = static_cast<int>(landings.size());
        landings.push_back(i);
      }
  }
  // Landing pixels without depth borrow the source depth, so only pixels with
  // their own depth get a shared window.
  std::vector<float> cache(landings.size() * wsize);
#pragma omp parallel for schedule(static)
  for (std::size_t k = 0; k < landings.size(); ++k) {
    const int qx = landings[k] % w, qy = landings[k] / w;
    if (level.has_target_depth(qx, qy)) level.target_window(qx, qy, level.landing_depth(qx, qy, qx, qy), cache.data() + k * wsize);
  }

  // Data cost volume.
  std::vector<double> data(np * nc), vol_l(np * nc), vol_c(np * nc);
  std::vector<std::uint8_t> inside(np * nc);
#pragma omp parallel
  {
    std::vector<float> src(wsize), tgt(wsize);
#pragma omp for schedule(static)
    for (std::size_t k = 0; k < np; ++k) {
      const int x = pixels[k] % w, y = pixels[k] / w;
      if (use_l) level.source_window(x, y, src.data());
      std::size_t c = k * nc;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx, ++c) {
          const int mx = init_x(x, y) + dx, my = init_y(x, y) + dy;
          const int qx = x + mx, qy = y + my;
          inside[c] = slot.contains(qx, qy);
          double e_l = 0;
          if (use_l) {
            if (!inside[c]) {
              e_l = level.light_field_energy(x, y, mx, my);
            } else {
              const float* t = cache.data() + static_cast<std::size_t>(slot(qx, qy)) * wsize;
              if (!level.has_target_depth(qx, qy)) {
                level.target_window(qx, qy, level.landing_depth(x, y, qx, qy), tgt.data());
                t = tgt.data();
              }
              e_l = level.light_field_energy(src.data(), t);
            }
          }
          double temporal, view;
          level.appearance_terms(x, y, mx, my, temporal, view);
          const double sparse = level.sparse_energy(x, y, mx, my, near[k]);
          vol_l[c] = e_l;
          vol_c[c] = temporal + view;
          data[c] = combine(params, e_l, temporal, view, sparse);
        }
    }
  }

  // Discrete argmin per pixel from per-candidate totals.
  std::vector<int> best(np);
  auto argmin = [&](std::size_t k, const double* totals) {
    const int x = pixels[k] % w, y = pixels[k] / w;
    int b = 0;
    for (int c = 1; c < static_cast<int>(nc); ++c) {
      const int mx = init_x(x, y) + c % side - r, my = init_y(x, y) + c / side - r;
      const int bx = init_x(x, y) + b % side - r, by = init_y(x, y) + b / side - r;
      if (better(totals[c], mx, my, totals[b], bx, by)) b = c;
    }
    return b;
  };
  for (std::size_t k = 0; k < np; ++k) best[k] = argmin(k, data.data() + k * nc);

  std::vector<double> totals(np * nc);
  std::copy(data.begin(), data.end(), totals.begin());
  const bool regularise = params.lambda_r > 0 && params.iterations > 0;
  Grid<int> index(w, h, -1);
  for (std::size_t k = 0; k < np; ++k) index[pixels[k]] = static_cast<int>(k);
  if (regularise) {
    for (int it = 0; it < params.iterations; ++it) {
      std::vector<int> next(np);
#pragma omp parallel
      {
        std::vector<NeighbourState> hood;
#pragma omp for schedule(static)
        for (std::size_t k = 0; k < np; ++k) {
          const int x = pixels[k] % w, y = pixels[k] / w;
          hood.clear();
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              if (!index.contains(x + dx, y + dy)) continue;
              const int q = index(x + dx, y + dy);
              if (q < 0) continue;
              const int qx = x + dx, qy = y + dy;
              const std::size_t cq = static_cast<std::size_t>(q) * nc + best[q];
              hood.push_back(NeighbourState{init_x(qx, qy) + best[q] % side - r, init_y(qx, qy) + best[q] / side - r,
                                            vol_l[cq], vol_c[cq]});
            }
          double* t = totals.data() + k * nc;
          for (std::size_t c = 0; c < nc; ++c) {
            const int mx = init_x(x, y) + static_cast<int>(c) % side - r;
            const int my = init_y(x, y) + static_cast<int>(c) / side - r;
            t[c] = data[k * nc + c] + params.lambda_r * regularization_energy(mx, my, hood, params);
          }
          next[k] = argmin(k, t);
        }
      }
      best.swap(next);
    }
  }

  // Sub-pixel refinement: 1D parabolas through the data energy around the
  // chosen step, summed over the Gaussian window of pixels that hold the
  // three candidates. A single pixel's energy is kinked at integer steps by
  // the bilinear sampling and would bias the fit.
  const WindowLayout& lay = level.layout();
  const int wr = lay.radius, wside = 2 * wr + 1;
  auto candidate = [&](std::size_t q, int mx, int my) -> long {
    const int qx = pixels[q] % w, qy = pixels[q] / w;
    const int cx = mx - init_x(qx, qy) + r, cy = my - init_y(qx, qy) + r;
    if (cx < 0 || cy < 0 || cx >= side || cy >= side) return -1;
    const std::size_t c = q * nc + static_cast<std::size_t>(cy) * side + cx;
    if (!(vol_l[c] < kEnergySentinel && vol_c[c] < kEnergySentinel)) return -1;
    return static_cast<long>(c);
  };
  auto smooth_energy = [&](std::size_t c) { return params.lambda_l * vol_l[c] + params.lambda_c * vol_c[c]; };
  auto offset = [&](std::size_t k, int mx, int my, int ax, int ay) {
    const int x = pixels[k] % w, y = pixels[k] / w;
    double em = 0, e0 = 0, ep = 0;
    for (int dy = -wr; dy <= wr; ++dy)
      for (int dx = -wr; dx <= wr; ++dx) {
        if (!index.contains(x + dx, y + dy)) continue;
        const int q = index(x + dx, y + dy);
        if (q < 0) continue;
        const long cm = candidate(q, mx - ax, my - ay), c0 = candidate(q, mx, my), cp = candidate(q, mx + ax, my + ay);
        if (cm < 0 || c0 < 0 || cp < 0) continue;
        const double wt = lay.kernel[(dy + wr) * wside + dx + wr];
        em += wt * smooth_energy(cm);
        e0 += wt * smooth_energy(c0);
        ep += wt * smooth_energy(cp);
      }
    return parabolic_offset(em, e0, ep);
  };

  for (std::size_t k = 0; k < np; ++k) {
    const int x = pixels[k] % w, y = pixels[k] / w;
    const int b = best[k];
    const int bx = b % side, by = b / side;
    const double* t = totals.data() + k * nc;
    const int mx = init_x(x, y) + bx - r, my = init_y(x, y) + by - r;
    out.step_x(x, y) = mx;
    out.step_y(x, y) = my;
    double ox = 0, oy = 0;
    if (finest && params.subpixel) {
      ox = offset(k, mx, my, 1, 0);
      oy = offset(k, mx, my, 0, 1);
    }
    out.u(x, y) = static_cast<float>(mx + ox);
    out.v(x, y) = static_cast<float>(my + oy);
    out.energy(x, y) = static_cast<float>(t[b]);
    const std::size_t c = k * nc + b;
    out.valid(x, y) = inside[c] && vol_l[c] < kEnergySentinel && vol_c[c] < kEnergySentinel;
  }
  return out;
}

FlowField estimate_flow_field(const CameraArray& array, int view, const FlowFrame& t0, const FlowFrame& t1,
                              const Mask& region, std::span<const SparseSeed> seeds, const FlowParams& params) {
  params.validate();
  if (count_nonzero(region) == 0) fail(ErrorCode::NoObjectPixels, "flow region is empty");
  const int w = t0.views.at(0).width(), h = t0.views.at(0).height();
  if (region.width() != w || region.height() != h) fail(ErrorCode::InvalidArgument, "region size mismatch");

  // Pyramid, stopping before images become smaller than the search window or
  // the oriented window.
  const int min_side = std::max(2 * params.search_radius + 4, 2 * window_radius(params.sigma) + 1);
  std::vector<FlowFrame> py0, py1;
  std::vector<Mask> regions{region};
  std::vector<double> scales{1.0};
  for (int l = 1; l < params.levels; ++l) {
    const FlowFrame& prev0 = l == 1 ? t0 : py0.back();
    const FlowFrame& prev1 = l == 1 ? t1 : py1.back();
    const int nw = static_cast<int>(std::ceil(prev0.views[0].width() * params.scale));
    const int nh = static_cast<int>(std::ceil(prev0.views[0].height() * params.scale));
    if (std::min(nw, nh) < min_side) break;
    py0.push_back(downsample_frame(prev0, params.scale));
    py1.push_back(downsample_frame(prev1, params.scale));
    regions.push_back(downsample_mask(regions.back(), nw, nh));
    scales.push_back(scales.back() * params.scale);
  }
  auto frame0 = [&](std::size_t l) -> const FlowFrame& { return l == 0 ? t0 : py0[l - 1]; };
  auto frame1 = [&](std::size_t l) -> const FlowFrame& { return l == 0 ? t1 : py1[l - 1]; };

  FlowField coarse;
  for (int l = static_cast<int>(scales.size()) - 1; l >= 0; --l) {
    const FlowFrame& f0 = frame0(l);
    const int lw = f0.views[0].width(), lh = f0.views[0].height();
    std::vector<SparseSeed> level_seeds;
    for (const auto& s : seeds) level_seeds.push_back({s.pixel * scales[l], s.displacement * scales[l]});
    Grid<int> ix(lw, lh, 0), iy(lw, lh, 0);
    seed_initial_flow(level_seeds, params.seed_radius, ix, iy);
    if (l + 1 < static_cast<int>(scales.size())) {
      const Mask& cregion = regions[l + 1];
      for (int y = 0; y < lh; ++y)
        for (int x = 0; x < lw; ++x) {
          const int cx = std::clamp(static_cast<int>(std::lround((x + 0.5) * params.scale - 0.5)), 0, coarse.width() - 1);
          const int cy = std::clamp(static_cast<int>(std::lround((y + 0.5) * params.scale - 0.5)), 0, coarse.height() - 1);
          if (!cregion(cx, cy) || !coarse.valid(cx, cy)) continue;
          ix(x, y) = static_cast<int>(std::lround(coarse.u(cx, cy) / params.scale));
          iy(x, y) = static_cast<int>(std::lround(coarse.v(cx, cy) / params.scale));
        }
    }
    const FlowLevel level(array, view, f0, frame1(l), params, scales[l]);
    coarse = estimate_flow_level(level, regions[l], ix, iy, level_seeds, params, l == 0);
  }
  coarse.view = view;
  return coarse;
}

Mask detect_occlusions(const FlowField& forward, const FlowField& backward, double tau, Grid<float>* round_trip) {
  Mask occ(forward.width(), forward.height(), 0);
  if (round_trip) *round_trip = Grid<float>(forward.width(), forward.height(), 0.0f);
  for (int y = 0; y < forward.height(); ++y)
    for (int x = 0; x < forward.width(); ++x) {
      if (!forward.valid(x, y)) continue;
      const double lx = x + forward.u(x, y), ly = y + forward.v(x, y);
      const int qx = static_cast<int>(std::floor(lx + 0.5)), qy = static_cast<int>(std::floor(ly + 0.5));
      if (!backward.valid.contains(qx, qy) || !backward.valid(qx, qy)) {
        occ(x, y) = 1;
        if (round_trip) (*round_trip)(x, y) = std::numeric_limits<float>::infinity();
        continue;
      }
      const double ex = forward.u(x, y) + backward.u(qx, qy);
      const double ey = forward.v(x, y) + backward.v(qx, qy);
      const double err = std::hypot(ex, ey);
      occ(x, y) = err > tau;
      if (round_trip) (*round_trip)(x, y) = static_cast<float>(err);
    }
  return occ;
}

}  // namespace lfv
