#include "lfv/keyframes.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Dense>

namespace lfv {

double appearance_metric(std::size_t matches, std::size_t features_i, std::size_t features_j) {
  const std::size_t total = features_i + features_j;
  if (total == 0) fail(ErrorCode::NoFeatures, "no features in either frame");
  return std::clamp(2.0 * static_cast<double>(matches) / static_cast<double>(total), 0.0, 1.0);
}

double appearance_metric(const FeatureSet& fi, const FeatureSet& fj, const MatchParams& params) {
  const std::size_t q = fi.size() && fj.size() ? match_keyframes(fi, fj, params).size() : 0;
  return appearance_metric(q, fi.size(), fj.size());
}

double distance_metric(int i, int j, int d_max) {
  if (j <= i) fail(ErrorCode::BadOrder, "distance metric needs j > i");
  if (d_max <= 0) fail(ErrorCode::InvalidArgument, "d_max must be positive");
  return static_cast<double>(j - i) / d_max;
}

namespace {

struct MaskStats {
  double area = 0;
  Vec2 centroid = Vec2::Zero();
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;
};

MaskStats mask_stats(const Mask& m) {
  MaskStats s;
  s.x0 = m.width();
  s.y0 = m.height();
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m(x, y)) {
        s.area += 1;
        s.centroid += Vec2(x, y);
        s.x0 = std::min(s.x0, x);
        s.y0 = std::min(s.y0, y);
        s.x1 = std::max(s.x1, x);
        s.y1 = std::max(s.y1, y);
      }
  if (s.area > 0) s.centroid /= s.area;
  return s;
}

Image mask_image(const Mask& m, double sigma) {
  Image img(m.width(), m.height(), 1);
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) img.at(x, y) = m(x, y) ? 1.0f : 0.0f;
  return gaussian_blur(img, sigma);
}

// x_j = [a -b; b a] (x_i - c_i) + c_j + t
struct Similarity {
  double a = 1, b = 0, tx = 0, ty = 0;
  Vec2 ci = Vec2::Zero(), cj = Vec2::Zero();
  Vec2 map(double x, double y) const {
    const double dx = x - ci.x(), dy = y - ci.y();
    return {a * dx - b * dy + cj.x() + tx, b * dx + a * dy + cj.y() + ty};
  }
};

double aligned_iou(const Mask& mi, const Mask& mj, const Similarity& w) {
  std::size_t inter = 0, uni = 0;
  for (int y = 0; y < mi.height(); ++y)
    for (int x = 0; x < mi.width(); ++x) {
      const Vec2 p = w.map(x, y);
      std::uint8_t vj = 0;
      sample_nearest(mj, p.x(), p.y(), vj);
      const bool a = mi(x, y) != 0, b = vj != 0;
      inter += a && b;
      uni += a || b;
    }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

}  // namespace

ShapeAlignment align_silhouettes(const Mask& mask_i, const Mask& mask_j, int max_iterations) {
  const MaskStats si = mask_stats(mask_i), sj = mask_stats(mask_j);
  if (si.area == 0 || sj.area == 0) fail(ErrorCode::EmptySilhouette, "empty silhouette");

  // Centroid and area-scale initialisation.
  Similarity w;
  w.ci = si.centroid;
  w.cj = sj.centroid;
  w.a = std::sqrt(sj.area / si.area);

  auto to_result = [](const Similarity& s, double iou, bool fallback) {
    ShapeAlignment r;
    r.iou = iou;
    r.scale = std::hypot(s.a, s.b);
    r.angle = std::atan2(s.b, s.a);
    r.tx = s.tx;
    r.ty = s.ty;
    r.fallback = fallback;
    return r;
  };

  Similarity best = w;
  double best_iou = aligned_iou(mask_i, mask_j, w);
  if (best_iou >= 1.0) return to_result(best, best_iou, false);

  constexpr double kSigma = 2.0;
  const Image bi = mask_image(mask_i, kSigma);
  const Image bj = mask_image(mask_j, kSigma);
  const int margin = static_cast<int>(std::ceil(3 * kSigma)) + 1;
  const int x0 = std::max(0, si.x0 - margin), x1 = std::min(mask_i.width() - 1, si.x1 + margin);
  const int y0 = std::max(0, si.y0 - margin), y1 = std::min(mask_i.height() - 1, si.y1 + margin);

  bool diverged = false;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::Matrix4d h = Eigen::Matrix4d::Zero();
    Eigen::Vector4d g = Eigen::Vector4d::Zero();
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const Vec2 p = w.map(x, y);
        float v, vxp, vxm, vyp, vym;
        if (!bj.sample(p.x(), p.y(), 0, v)) v = 0;
        if (!bj.sample(p.x() + 1, p.y(), 0, vxp)) vxp = 0;
        if (!bj.sample(p.x() - 1, p.y(), 0, vxm)) vxm = 0;
        if (!bj.sample(p.x(), p.y() + 1, 0, vyp)) vyp = 0;
        if (!bj.sample(p.x(), p.y() - 1, 0, vym)) vym = 0;
        const double gx = 0.5 * (vxp - vxm), gy = 0.5 * (vyp - vym);
        const double dx = x - w.ci.x(), dy = y - w.ci.y();
        // d(map)/d(a, b, tx, ty)
        const Eigen::Vector4d jac(gx * dx + gy * dy, -gx * dy + gy * dx, gx, gy);
        const double r = v - bi.at(x, y);
        h += jac * jac.transpose();
        g += jac * r;
      }
    const Eigen::Vector4d step = h.ldlt().solve(-g);
    if (!step.allFinite()) {
      diverged = true;
      break;
    }
    w.a += step[0];
    w.b += step[1];
    w.tx += step[2];
    w.ty += step[3];
    const double scale = std::hypot(w.a, w.b);
    if (!(scale > 0.1 && scale < 10.0) || std::abs(w.tx) > mask_i.width() + mask_j.width() ||
        std::abs(w.ty) > mask_i.height() + mask_j.height()) {
      diverged = true;
      break;
    }
    const double iou = aligned_iou(mask_i, mask_j, w);
    if (iou > best_iou) {
      best_iou = iou;
      best = w;
    }
    if (step.head<2>().norm() < 1e-6 && step.tail<2>().norm() < 1e-3) break;
  }
  if (diverged) {
    Similarity centroid_only;
    centroid_only.ci = si.centroid;
    centroid_only.cj = sj.centroid;
    return to_result(centroid_only, aligned_iou(mask_i, mask_j, centroid_only), true);
  }
  return to_result(best, best_iou, false);
}

double shape_metric(const Mask& mask_i, const Mask& mask_j) {
  return std::clamp(align_silhouettes(mask_i, mask_j).iou, 0.0, 1.0);
}

double frame_similarity(const std::vector<ViewMetrics>& views) {
  if (views.empty()) return 1.0;
  double sum = 0;
  for (const auto& v : views) sum += v.m + v.i + v.l;
  return std::clamp(1.0 - sum / (3.0 * static_cast<double>(views.size())), 0.0, 1.0);
}

std::pair<int, int> KeyFrameSet::segment(std::size_t k) const {
  const int begin = keyframes.at(k);
  const int end = k + 1 < keyframes.size() ? keyframes[k + 1] : num_frames;
  return {begin, end};
}

std::size_t KeyFrameSet::segment_of(int frame) const {
  auto it = std::upper_bound(keyframes.begin(), keyframes.end(), frame);
  if (it == keyframes.begin()) fail(ErrorCode::InvalidArgument, "frame precedes the first key-frame");
  return static_cast<std::size_t>(it - keyframes.begin() - 1);
}

KeyFrameSet select_keyframes(const FrameScorer& scorer, const KeyFrameParams& params) {
  if (params.d_max < 1) fail(ErrorCode::InvalidArgument, "d_max must be at least 1");
  KeyFrameSet out;
  out.num_frames = scorer.num_frames();
  out.d_max = params.d_max;
  out.threshold = params.threshold;
  if (out.num_frames <= 0) return out;
  out.keyframes.push_back(0);
  int k = 0;
  for (int j = 1; j < out.num_frames; ++j) {
    bool cut = j - k >= params.d_max;
    double worst = 0;
    for (int o = 0; o < scorer.num_objects(); ++o) {
      PairScore score{k, j, o, 0, scorer.metrics(k, j, o, params.d_max)};
      score.d = frame_similarity(score.views);
      worst = std::max(worst, score.d);
      out.log.push_back(std::move(score));
    }
    if (worst > params.threshold) cut = true;
    if (cut) {
      out.keyframes.push_back(j);
      k = j;
    }
  }
  return out;
}

FeatureScorer::FeatureScorer(std::vector<std::vector<std::vector<FeatureSet>>> features,
                             std::vector<std::vector<std::vector<Mask>>> silhouettes, MatchParams params)
    : features_(std::move(features)), silhouettes_(std::move(silhouettes)), params_(params) {
  if (features_.size() != silhouettes_.size())
    fail(ErrorCode::InvalidArgument, "feature and silhouette frame counts differ");
}

int FeatureScorer::num_objects() const {
  std::size_t n = 0;
  for (const auto& f : features_) n = std::max(n, f.size());
  return static_cast<int>(n);
}

std::vector<ViewMetrics> FeatureScorer::metrics(int i, int j, int object, int d_max) const {
  auto views_of = [&](int frame) -> const std::vector<FeatureSet>* {
    const auto& f = features_.at(frame);
    return object < static_cast<int>(f.size()) ? &f[object] : nullptr;
  };
  auto masks_of = [&](int frame) -> const std::vector<Mask>* {
    const auto& s = silhouettes_.at(frame);
    return object < static_cast<int>(s.size()) ? &s[object] : nullptr;
  };
  const auto* fi = views_of(i);
  const auto* fj = views_of(j);
  const auto* si = masks_of(i);
  const auto* sj = masks_of(j);
  std::size_t nv = 0;
  for (const auto* p : {fi, fj})
    if (p) nv = std::max(nv, p->size());
  for (const auto* p : {si, sj})
    if (p) nv = std::max(nv, p->size());

  const double l = distance_metric(i, j, d_max);
  std::vector<ViewMetrics> out(nv);
#pragma omp parallel for schedule(static)
  for (std::size_t c = 0; c < nv; ++c) {
    ViewMetrics vm;
    vm.l = l;
    if (fi && fj && c < fi->size() && c < fj->size()) {
      const FeatureSet& a = (*fi)[c];
      const FeatureSet& b = (*fj)[c];
      if (a.size() && b.size()) vm.m = appearance_metric(a, b, params_);
    }
    if (si && sj && c < si->size() && c < sj->size()) {
      const Mask& a = (*si)[c];
      const Mask& b = (*sj)[c];
      if (!a.empty() && !b.empty() && count_nonzero(a) && count_nonzero(b)) vm.i = shape_metric(a, b);
    }
    out[c] = vm;
  }
  return out;
}

std::string format_keyframes(const KeyFrameSet& set) {
  std::ostringstream os;
  os << "# lfv-keyframes 1\n";
  os << "frames " << set.num_frames << "\n";
  os << "d_max " << set.d_max << "\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", set.threshold);
  os << "threshold " << buf << "\n";
  os << "keyframes";
  for (int k : set.keyframes) os << ' ' << k;
  os << "\n";
  for (const auto& s : set.log) {
    std::snprintf(buf, sizeof buf, "%.9g", s.d);
    os << "score " << s.from << ' ' << s.to << ' ' << s.object << ' ' << buf << ' ' << s.views.size();
    for (const auto& v : s.views) {
      std::snprintf(buf, sizeof buf, " %.9g %.9g %.9g", v.m, v.l, v.i);
      os << buf;
    }
    os << "\n";
  }
  return os.str();
}

KeyFrameSet parse_keyframes(const std::string& text) {
  KeyFrameSet set;
  set.keyframes.clear();
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      header = header || line == "# lfv-keyframes 1";
      continue;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    bool ok = true;
    if (key == "frames") {
      ok = static_cast<bool>(ls >> set.num_frames);
    } else if (key == "d_max") {
      ok = static_cast<bool>(ls >> set.d_max);
    } else if (key == "threshold") {
      ok = static_cast<bool>(ls >> set.threshold);
    } else if (key == "keyframes") {
      int k;
      while (ls >> k) set.keyframes.push_back(k);
    } else if (key == "score") {
      PairScore s;
      std::size_t n = 0;
      ok = static_cast<bool>(ls >> s.from >> s.to >> s.object >> s.d >> n);
      for (std::size_t c = 0; ok && c < n; ++c) {
        ViewMetrics v;
        ok = static_cast<bool>(ls >> v.m >> v.l >> v.i);
        s.views.push_back(v);
      }
      set.log.push_back(std::move(s));
    } else {
      ok = false;
    }
    if (!ok) fail(ErrorCode::ParseError, "keyframes line " + std::to_string(lineno) + ": " + line);
  }
  if (!header) fail(ErrorCode::SchemaMismatch, "missing keyframes header");
  if (set.keyframes.empty() || set.keyframes.front() != 0)
    fail(ErrorCode::ParseError, "first key-frame must be frame 0");
  return set;
}

}  // namespace lfv
