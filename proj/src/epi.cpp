#include "lfv/epi.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace lfv {

namespace {

float luma_at(const Image& img, double x, double y, bool& ok) {
  float v = 0;
  if (img.channels() == 1) {
    ok = img.sample(x, y, 0, v);
    return v;
  }
  float r, g, b;
  ok = img.sample(x, y, 0, r) && img.sample(x, y, 1, g) && img.sample(x, y, 2, b);
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

}  // namespace

Image EpiVolume::plot(const Epi& epi) const {
  Image img(width, height, 1);
  Grid<int> count(width, height, 0);
  for (const auto& s : epi.samples) {
    const int col = static_cast<int>(std::lround(s.x));
    const int row = std::min(static_cast<int>(std::lround(s.y)), height - 1);
    if (col < 0 || col >= width || row < 0) continue;
    img.at(col, row) += s.intensity;
    count(col, row) += 1;
  }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (count(x, y)) img.at(x, y) /= static_cast<float>(count(x, y));
  return img;
}

std::vector<double> epi_rows(std::span<const double> positions, int height) {
  if (positions.empty()) fail(ErrorCode::DegenerateBaseline, "no cameras on the array line");
  const auto [lo, hi] = std::minmax_element(positions.begin(), positions.end());
  const double span = *hi - *lo;
  if (!(span > 0)) fail(ErrorCode::DegenerateBaseline, "zero baseline along the array line");
  std::vector<double> rows;
  rows.reserve(positions.size());
  for (double s : positions) rows.push_back(height * (s - *lo) / span);
  return rows;
}

EpiVolume build_epi_volume(const LightFieldFrame& frame, const CameraArray& array, const ObjectCluster& cluster,
                           EpiDirection direction, int mu) {
  if (mu < 1) fail(ErrorCode::InvalidArgument, "mu must be positive");
  const bool horizontal = direction == EpiDirection::Horizontal;
  const int lines = horizontal ? array.rows() : array.cols();
  const int n_w = horizontal ? array.cols() : array.rows();
  if (frame.views.size() != static_cast<std::size_t>(array.size()))
    fail(ErrorCode::InvalidArgument, "frame and array view counts differ");

  EpiVolume vol;
  vol.direction = direction;
  vol.object = cluster.id;
  vol.mu = mu;
  vol.n_w = n_w;
  vol.height = n_w * mu;
  vol.width = horizontal ? frame.views.at(0).width() : frame.views.at(0).height();
  vol.focal = horizontal ? array.reference_camera().fx() : array.reference_camera().fy();

  for (int line = 0; line < lines; ++line) {
    std::vector<int> views;
    std::vector<double> positions;
    for (int k = 0; k < n_w; ++k) {
      const GridPos pos = horizontal ? GridPos{line, k} : GridPos{k, line};
      const auto idx = array.index_at(pos);
      if (!idx) continue;
      views.push_back(*idx);
      const Vec3 c = array.reference_camera().rotation * array.camera(*idx).center();
      positions.push_back(horizontal ? c.x() : c.y());
    }
    const std::vector<double> rows = epi_rows(positions, vol.height);
    const auto [lo, hi] = std::minmax_element(positions.begin(), positions.end());
    vol.baseline_unit = (*hi - *lo) / vol.height;

    std::map<int, Epi> by_line;
    for (std::size_t k = 0; k < views.size(); ++k) {
      const int view = views[k];
      const CameraCalibration& cam = array.camera(view);
      for (std::size_t i : cluster.members) {
        if (!frame.cloud.visible(i, view)) continue;
        const auto proj = try_project(frame.cloud.points[i], cam);
        if (!proj) continue;
        bool ok = false;
        const float value = luma_at(frame.views[view], proj->pixel.x(), proj->pixel.y(), ok);
        if (!ok) continue;
        const double along = horizontal ? proj->pixel.x() : proj->pixel.y();
        const double across = horizontal ? proj->pixel.y() : proj->pixel.x();
        const int image_line = static_cast<int>(std::lround(across));
        Epi& epi = by_line[image_line];
        epi.array_line = line;
        epi.image_line = image_line;
        epi.samples.push_back(EpiSample{along, rows[k], value, frame.cloud.point_ids[i], view});
      }
    }
    for (auto& [_, epi] : by_line) vol.epis.push_back(std::move(epi));
  }
  return vol;
}

namespace {

struct TlsFit {
  double slope, intercept, cos_t, sin_t, my, mx;
};

TlsFit tls(const std::vector<const EpiSample*>& pts) {
  const double n = static_cast<double>(pts.size());
  double my = 0, mx = 0;
  for (const auto* p : pts) {
    my += p->y;
    mx += p->x;
  }
  my /= n;
  mx /= n;
  double syy = 0, sxx = 0, sxy = 0;
  for (const auto* p : pts) {
    const double dy = p->y - my, dx = p->x - mx;
    syy += dy * dy;
    sxx += dx * dx;
    sxy += dx * dy;
  }
  // Principal direction (dy, dx) = (cos t, sin t).
  const double theta = 0.5 * std::atan2(2 * sxy, syy - sxx);
  const double c = std::cos(theta), s = std::sin(theta);
  if (std::abs(c) < 1e-12) fail(ErrorCode::TooFewSamples, "EPI samples span a single row");
  const double slope = s / c;
  return {slope, mx - slope * my, c, s, my, mx};
}

double residual(const TlsFit& f, const EpiSample& p) {
  return std::abs((p.x - f.mx) * f.cos_t - (p.y - f.my) * f.sin_t);
}

bool distinct_rows(const std::vector<const EpiSample*>& pts) {
  for (const auto* p : pts)
    if (p->y != pts.front()->y) return true;
  return false;
}

}  // namespace

EpiLine fit_epi_line(std::span<const EpiSample> samples) {
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& p = samples[a];
    const auto& q = samples[b];
    if (p.y != q.y) return p.y < q.y;
    if (p.x != q.x) return p.x < q.x;
    if (p.point_id != q.point_id) return p.point_id < q.point_id;
    return p.view < q.view;
  });
  std::vector<const EpiSample*> pts;
  for (std::size_t i : order) pts.push_back(&samples[i]);
  if (pts.size() < 2 || !distinct_rows(pts)) fail(ErrorCode::TooFewSamples, "need two samples on distinct rows");

  auto rms_of = [](const TlsFit& f, const std::vector<const EpiSample*>& set) {
    double sum = 0;
    for (const auto* p : set) sum += residual(f, *p) * residual(f, *p);
    return std::sqrt(sum / static_cast<double>(set.size()));
  };

  TlsFit fit = tls(pts);
  const double limit = std::max(2.0 * rms_of(fit, pts), 1e-9);
  std::vector<std::size_t> kept_order;
  std::vector<const EpiSample*> kept;
  for (std::size_t k = 0; k < pts.size(); ++k)
    if (residual(fit, *pts[k]) <= limit) {
      kept.push_back(pts[k]);
      kept_order.push_back(order[k]);
    }
  if (kept.size() < pts.size() && kept.size() >= 2 && distinct_rows(kept)) {
    fit = tls(kept);
  } else {
    kept = pts;
    kept_order = order;
  }

  EpiLine line;
  line.slope = fit.slope;
  line.intercept = fit.intercept;
  line.rms = rms_of(fit, kept);
  line.inliers = kept_order;
  std::sort(line.inliers.begin(), line.inliers.end());
  return line;
}

double epi_line_depth(double slope, double focal, double baseline_unit) {
  constexpr double kEps = 1e-12;
  if (!(slope < -kEps)) return std::numeric_limits<double>::infinity();
  return -focal * baseline_unit / slope;
}

std::vector<PointLine> fit_point_lines(const EpiVolume& volume) {
  std::vector<PointLine> out;
  for (const auto& epi : volume.epis) {
    std::map<std::int64_t, std::vector<EpiSample>> by_point;
    for (const auto& s : epi.samples) by_point[s.point_id].push_back(s);
    for (const auto& [id, samples] : by_point) {
      if (samples.size() < 2) continue;
      bool distinct = false;
      for (const auto& s : samples) distinct = distinct || s.y != samples.front().y;
      if (!distinct) continue;
      PointLine pl{id, epi.array_line, fit_epi_line(samples)};
      pl.line.depth = epi_line_depth(pl.line.slope, volume.focal, volume.baseline_unit);
      out.push_back(std::move(pl));
    }
  }
  return out;
}

std::vector<Vec2> view_shears(const CameraArray& array, int center, double d_ref, double pixel_scale) {
  if (!(d_ref > 0)) fail(ErrorCode::InvalidArgument, "reference depth must be positive");
  const CameraCalibration& c = array.camera(center);
  std::vector<Vec2> out;
  for (const auto& cam : array.cameras()) {
    const Vec3 b = c.rotation * (cam.center() - c.center());
    out.emplace_back(c.fx() * b.x() / d_ref * pixel_scale, c.fy() * b.y() / d_ref * pixel_scale);
  }
  return out;
}

int window_radius(double sigma) {
  if (!(sigma > 0)) fail(ErrorCode::InvalidArgument, "sigma must be positive");
  return static_cast<int>(std::ceil(3.0 * sigma));
}

WindowLayout window_layout(const CameraArray& array, int center, const WindowParams& params, double pixel_scale) {
  WindowLayout layout;
  layout.radius = window_radius(params.sigma);
  layout.views = array.cross_views(center);
  const std::vector<Vec2> shears = view_shears(array, center, params.d_ref, pixel_scale);
  for (int v : layout.views) layout.shears.push_back(shears[v]);
  layout.d_ref = params.d_ref;
  const int side = 2 * layout.radius + 1;
  layout.kernel.resize(static_cast<std::size_t>(side) * side);
  for (int dy = -layout.radius; dy <= layout.radius; ++dy)
    for (int dx = -layout.radius; dx <= layout.radius; ++dx)
      layout.kernel[(dy + layout.radius) * side + dx + layout.radius] =
          static_cast<float>(std::exp(-(dx * dx + dy * dy) / (2 * params.sigma * params.sigma)));
  return layout;
}

bool fill_window(std::span<const Image> views, const WindowLayout& layout, double depth, const Vec2& center_px,
                 float* values) {
  const int r = layout.radius, side = 2 * r + 1;
  const double inv = std::isfinite(depth) && depth > 0 ? 1.0 / normalized_depth(depth, layout.d_ref) : 0.0;
  bool clipped = false;
  for (std::size_t k = 0; k < layout.views.size(); ++k) {
    const Image& img = views[layout.views[k]];
    const double ox = center_px.x() - layout.shears[k].x() * inv;
    const double oy = center_px.y() - layout.shears[k].y() * inv;
    float* out = values + k * side * side;
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx) {
        float v;
        if (!img.sample(ox + dx, oy + dy, 0, v)) {
          v = std::numeric_limits<float>::quiet_NaN();
          clipped = true;
        }
        *out++ = v;
      }
  }
  return clipped;
}

OrientedWindow oriented_window(std::span<const Image> views, const CameraArray& array, int center, double depth,
                               const Vec2& center_px, const WindowParams& params, double pixel_scale) {
  if (!(depth > 0)) fail(ErrorCode::NonPositiveDepth, "window depth must be positive");
  if (views.size() != static_cast<std::size_t>(array.size()))
    fail(ErrorCode::InvalidArgument, "view count differs from the array");
  const WindowLayout layout = window_layout(array, center, params, pixel_scale);
  OrientedWindow w;
  w.radius = layout.radius;
  w.views = layout.views;
  const std::size_t n = layout.kernel.size();
  w.values.resize(layout.views.size() * n);
  w.weights.resize(layout.views.size() * n);
  for (std::size_t k = 0; k < layout.views.size(); ++k)
    std::copy(layout.kernel.begin(), layout.kernel.end(), w.weights.begin() + k * n);
  w.clipped = fill_window(views, layout, depth, center_px, w.values.data());
  return w;
}

double window_distance(const float* a, const float* b, const WindowLayout& layout) noexcept {
  const std::size_t n = layout.kernel.size();
  double num = 0, den = 0;
  for (std::size_t k = 0; k < layout.views.size(); ++k) {
    const float* pa = a + k * n;
    const float* pb = b + k * n;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(pa[j]) || std::isnan(pb[j])) continue;
      const double d = static_cast<double>(pa[j]) - pb[j];
      num += layout.kernel[j] * d * d;
      den += layout.kernel[j];
    }
  }
  return den > 0 ? num / den : std::numeric_limits<double>::quiet_NaN();
}

double window_distance(const OrientedWindow& a, const OrientedWindow& b) {
  if (a.radius != b.radius || a.views != b.views || a.values.size() != b.values.size() ||
      a.weights.size() != b.weights.size())
    fail(ErrorCode::InvalidArgument, "window shapes differ");
  double num = 0, den = 0;
  for (std::size_t j = 0; j < a.values.size(); ++j) {
    if (std::isnan(a.values[j]) || std::isnan(b.values[j])) continue;
    const double d = static_cast<double>(a.values[j]) - b.values[j];
    num += a.weights[j] * d * d;
    den += a.weights[j];
  }
  if (!(den > 0)) fail(ErrorCode::NoOverlap, "windows share no valid sample");
  return num / den;
}

}  // namespace lfv
