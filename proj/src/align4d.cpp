#include "lfv/align4d.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace lfv {

std::size_t Correspondence4D::alive(int frame) const {
  std::size_t n = 0;
  for (const auto& t : trajectories) n += t.frames.count(frame);
  return n;
}

double depth_at(const DepthMap& depth, const Vec2& pixel) {
  const double x = pixel.x(), y = pixel.y();
  if (x >= 0 && y >= 0 && x <= depth.width() - 1 && y <= depth.height() - 1) {
    const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
    const int x1 = std::min(x0 + 1, depth.width() - 1), y1 = std::min(y0 + 1, depth.height() - 1);
    const float d[4] = {depth(x0, y0), depth(x1, y0), depth(x0, y1), depth(x1, y1)};
    const auto [lo, hi] = std::minmax_element(d, d + 4);
    if (*lo > 0 && *hi < 1.05f * *lo) {
      float v;
      sample_bilinear(depth, x, y, v);
      return v;
    }
  }
  float v = 0;
  if (!sample_nearest(depth, x, y, v)) return 0.0;
  return v;
}

BackprojectedFlow backproject_flow(const FlowField& flow, const DepthMap& depth_from, const DepthMap& depth_to,
                                   const CameraCalibration& cam) {
  BackprojectedFlow out;
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) {
      if (!flow.usable(x, y)) continue;
      const double d0 = depth_from(x, y);
      const Vec2 p(x, y);
      const Vec2 q = p + flow.at(x, y);
      const double d1 = depth_at(depth_to, q);
      if (!(d0 > 0) || !(d1 > 0)) {
        ++out.dropped;
        continue;
      }
      out.pairs.push_back(
          FlowCorrespondence{p, q, backproject_pixel(p, d0, cam), backproject_pixel(q, d1, cam), flow.round_trip(x, y)});
    }
  return out;
}

std::map<std::int64_t, PointState> fuse_correspondences(std::vector<ViewEstimates> views) {
  std::stable_sort(views.begin(), views.end(), [](const ViewEstimates& a, const ViewEstimates& b) {
    if (a.visible_points != b.visible_points) return a.visible_points > b.visible_points;
    return a.view < b.view;
  });
  std::map<std::int64_t, PointState> out;
  for (const auto& v : views)
    for (const auto& e : v.estimates)
      out.emplace(e.id, PointState{e.position, 1.0 / (1.0 + e.round_trip), v.view, false});
  return out;
}

std::map<std::int64_t, PointState> propagate_points(const LightFieldSequence& seq, const FlowSource& flows,
                                                    const std::map<std::int64_t, Vec3>& points, int from, int to,
                                                    const AlignParams& params) {
  const int nv = seq.num_views();
  const LightFieldFrame& f0 = seq.frames.at(from);
  const LightFieldFrame& f1 = seq.frames.at(to);
  std::vector<std::pair<std::int64_t, Vec3>> list(points.begin(), points.end());
  std::vector<ViewEstimates> views(nv);
#pragma omp parallel for schedule(static)
  for (int c = 0; c < nv; ++c) {
    ViewEstimates& ve = views[c];
    ve.view = c;
    for (std::size_t i = 0; i < f0.cloud.size(); ++i) ve.visible_points += f0.cloud.visible(i, c);
    const CameraCalibration& cam = seq.array.camera(c);
    const FlowField& flow = flows.flow(c, from, to);
    for (const auto& [id, x] : list) {
      if (!is_visible(x, cam, f0.depths[c], params.visibility_tolerance)) continue;
      const Vec2 p = project_point(x, cam).pixel;
      const int px = static_cast<int>(std::floor(p.x() + 0.5)), py = static_cast<int>(std::floor(p.y() + 0.5));
      if (!flow.valid.contains(px, py) || !flow.usable(px, py)) continue;
      const Vec2 q = p + flow.at(px, py);
      const double d = depth_at(f1.depths[c], q);
      if (!(d > 0)) continue;
      ve.estimates.push_back(PointEstimate{id, backproject_pixel(q, d, cam), flow.round_trip(px, py)});
    }
  }
  return fuse_correspondences(std::move(views));
}

std::vector<Trajectory> propagate_new_regions(const LightFieldSequence& seq, const TrackSet& tracks,
                                              const std::map<std::int64_t, Vec3>& tracked, int t,
                                              std::int64_t first_id, const AlignParams& params) {
  const int nv = seq.num_views();
  const LightFieldFrame& frame = seq.frames.at(t);
  std::vector<Mask> covered(nv, Mask(seq.width, seq.height, 0));
#pragma omp parallel for schedule(static)
  for (int c = 0; c < nv; ++c) {
    const CameraCalibration& cam = seq.array.camera(c);
    for (const auto& [id, x] : tracked) {
      if (!is_visible(x, cam, frame.depths[c], params.visibility_tolerance)) continue;
      const Vec2 p = project_point(x, cam).pixel;
      const int px = static_cast<int>(std::floor(p.x() + 0.5)), py = static_cast<int>(std::floor(p.y() + 0.5));
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (covered[c].contains(px + dx, py + dy)) covered[c](px + dx, py + dy) = 1;
    }
  }

  struct Obs {
    int view;
    Vec2 pixel;
    int track;
  };
  std::vector<Obs> observed;
  for (const auto& tr : tracks.tracks) {
    auto it = tr.observations.find(t);
    if (it != tr.observations.end()) observed.push_back({tr.view, it->second.pixel, tr.id});
  }

  std::vector<Trajectory> out;
  std::int64_t next = first_id;
  for (std::size_t i = 0; i < frame.cloud.size(); ++i) {
    if (frame.cloud.object_ids[i] < 0) continue;
    bool seen = false, hit = false;
    int link = -1;
    for (int c = 0; c < nv && !hit; ++c) {
      if (!frame.cloud.visible(i, c)) continue;
      const auto proj = try_project(frame.cloud.points[i], seq.array.camera(c));
      if (!proj) continue;
      seen = true;
      const Vec2& p = proj->pixel;
      const int px = static_cast<int>(std::floor(p.x() + 0.5)), py = static_cast<int>(std::floor(p.y() + 0.5));
      hit = covered[c].contains(px, py) && covered[c](px, py);
      for (const auto& o : observed)
        if (o.view == c && (o.pixel - p).norm() <= params.link_radius && (link < 0 || o.track < link)) link = o.track;
    }
    if (!seen || hit) continue;
    Trajectory tr;
    tr.id = next++;
    tr.source_point = frame.cloud.point_ids[i];
    tr.object = frame.cloud.object_ids[i];
    tr.birth = tr.death = t;
    tr.track = link;
    tr.frames.emplace(t, PointState{frame.cloud.points[i], 1.0, -1, false});
    out.push_back(std::move(tr));
  }
  return out;
}

int anchor_keyframe(const std::vector<int>& keyframes, int frame) {
  int best = -1;
  for (int k : keyframes)
    if (k < frame) best = std::max(best, k);
  return best;
}

Correspondence4D build_4d_model(const LightFieldSequence& seq, const KeyFrameSet& keyframes, const TrackSet& tracks,
                                const FlowSource& flows, const AlignParams& params) {
  Correspondence4D model;
  model.num_frames = seq.num_frames();
  model.keyframes = keyframes.keyframes;
  if (model.num_frames == 0) return model;

  std::map<std::int64_t, std::size_t> index;
  auto add = [&](std::vector<Trajectory> born) {
    for (auto& tr : born) {
      index[tr.id] = model.trajectories.size();
      model.trajectories.push_back(std::move(tr));
    }
  };
  std::int64_t next_id = 0;
  add(propagate_new_regions(seq, tracks, {}, 0, next_id, params));
  next_id = static_cast<std::int64_t>(model.trajectories.size());

  for (int t = 0; t + 1 < model.num_frames; ++t) {
    std::map<std::int64_t, Vec3> alive;
    for (const auto& tr : model.trajectories)
      if (tr.death == t) alive.emplace(tr.id, tr.frames.at(t).position);
    std::map<std::int64_t, PointState> next = propagate_points(seq, flows, alive, t, t + 1, params);

    const int k = anchor_keyframe(model.keyframes, t + 1);
    if (k >= 0 && k < t) {
      std::map<std::int64_t, Vec3> at_key;
      for (const auto& [id, _] : alive) {
        const Trajectory& tr = model.trajectories[index.at(id)];
        if (tr.birth <= k) at_key.emplace(id, tr.frames.at(k).position);
      }
      for (auto& [id, anchored] : propagate_points(seq, flows, at_key, k, t + 1, params)) {
        anchored.anchored = true;
        auto it = next.find(id);
        if (it == next.end()) {
          next.emplace(id, anchored);
          continue;
        }
        const CameraCalibration& cam = seq.array.camera(anchored.view);
        const auto a = try_project(anchored.position, cam);
        const auto b = try_project(it->second.position, cam);
        if (!a || !b || (a->pixel - b->pixel).norm() > params.anchor_threshold) it->second = anchored;
      }
    }

    std::map<std::int64_t, Vec3> tracked;
    for (const auto& [id, state] : next) {
      Trajectory& tr = model.trajectories[index.at(id)];
      tr.frames.emplace(t + 1, state);
      tr.death = t + 1;
      tracked.emplace(id, state.position);
    }
    auto born = propagate_new_regions(seq, tracks, tracked, t + 1, next_id, params);
    next_id += static_cast<std::int64_t>(born.size());
    add(std::move(born));
  }
  return model;
}

std::string format_correspondence(const Correspondence4D& model) {
  std::ostringstream os;
  os << "# lfv-4d 1\n";
  os << "frames " << model.num_frames << "\n";
  os << "keyframes";
  for (int k : model.keyframes) os << ' ' << k;
  os << "\n";
  char buf[256];
  for (const auto& tr : model.trajectories) {
    std::snprintf(buf, sizeof buf, "point %lld %lld %d %d %d %d\n", static_cast<long long>(tr.id),
                  static_cast<long long>(tr.source_point), tr.object, tr.birth, tr.death, tr.track);
    os << buf;
    for (const auto& [f, s] : tr.frames) {
      std::snprintf(buf, sizeof buf, "%lld %d %.17g %.17g %.17g %.17g %d %d\n", static_cast<long long>(tr.id), f,
                    s.position.x(), s.position.y(), s.position.z(), s.confidence, s.view, s.anchored ? 1 : 0);
      os << buf;
    }
  }
  return os.str();
}

Correspondence4D parse_correspondence(const std::string& text) {
  Correspondence4D model;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  bool header = false;
  auto bad = [&](const std::string& l) {
    fail(ErrorCode::ParseError, "4d line " + std::to_string(lineno) + ": " + l);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') {
      header = header || line == "# lfv-4d 1";
      continue;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "frames") {
      if (!(ls >> model.num_frames)) bad(line);
    } else if (key == "keyframes") {
      int k;
      while (ls >> k) model.keyframes.push_back(k);
    } else if (key == "point") {
      Trajectory tr;
      long long id, src;
      if (!(ls >> id >> src >> tr.object >> tr.birth >> tr.death >> tr.track)) bad(line);
      tr.id = id;
      tr.source_point = src;
      model.trajectories.push_back(std::move(tr));
    } else {
      std::istringstream rs(line);
      long long id;
      int f, anchored;
      PointState s;
      double x, y, z;
      if (!(rs >> id >> f >> x >> y >> z >> s.confidence >> s.view >> anchored)) bad(line);
      if (model.trajectories.empty() || model.trajectories.back().id != id) bad(line);
      s.position = Vec3(x, y, z);
      s.anchored = anchored != 0;
      model.trajectories.back().frames.emplace(f, s);
    }
  }
  if (!header) fail(ErrorCode::SchemaMismatch, "missing 4d header");
  return model;
}

}  // namespace lfv
