#include "lfv/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace lfv {

SoeResult silhouette_overlap_error(const std::vector<Mask>& propagated, const std::vector<Mask>& reference) {
  if (propagated.size() != reference.size()) fail(ErrorCode::InvalidArgument, "mask lists differ in length");
  SoeResult r;
  double sum = 0;
  for (std::size_t k = 0; k < propagated.size(); ++k) {
    const Mask& p = propagated[k];
    const Mask& s = reference[k];
    if (p.width() != s.width() || p.height() != s.height()) fail(ErrorCode::InvalidArgument, "mask size mismatch");
    std::size_t area = 0, inter = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      area += p[i] != 0;
      inter += p[i] != 0 && s[i] != 0;
    }
    if (area == 0) {
      ++r.skipped_empty;
      continue;
    }
    sum += static_cast<double>(inter) / static_cast<double>(area);
    ++r.pairs;
  }
  r.ratio = r.pairs ? sum / static_cast<double>(r.pairs) : 0.0;
  r.soe_error = 1.0 - r.ratio;
  return r;
}

Mask propagate_mask(const Mask& mask, const FlowField& flow) {
  Mask out(mask.width(), mask.height(), 0);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask(x, y) || !flow.usable(x, y)) continue;
      const int qx = static_cast<int>(std::floor(x + flow.u(x, y) + 0.5));
      const int qy = static_cast<int>(std::floor(y + flow.v(x, y) + 0.5));
      if (out.contains(qx, qy)) out(qx, qy) = 1;
    }
  return close3(out);
}

double rms_color_difference(const float a[3], const float b[3]) {
  double sum = 0;
  for (int c = 0; c < 3; ++c) {
    const double d = 255.0 * (static_cast<double>(a[c]) - b[c]);
    sum += d * d;
  }
  return std::sqrt(sum / 3.0);
}

namespace {

bool color_at(const LightFieldSequence& seq, int frame, const Vec3& x, float rgb[3]) {
  const int ref = seq.array.reference();
  const CameraCalibration& cam = seq.array.camera(ref);
  const LightFieldFrame& f = seq.frames.at(frame);
  if (!is_visible(x, cam, f.depths[ref])) return false;
  const Vec2 p = project_point(x, cam).pixel;
  const Image& img = f.views[ref];
  for (int c = 0; c < 3; ++c)
    if (!img.sample(p.x(), p.y(), img.channels() == 3 ? c : 0, rgb[c])) return false;
  return true;
}

}  // namespace

CoherenceResult temporal_coherence(const Correspondence4D& model, const LightFieldSequence& seq, CoherenceMode mode) {
  std::vector<double> values;
  for (const auto& tr : model.trajectories) {
    for (const auto& [frame, state] : tr.frames) {
      int other = -1;
      if (mode == CoherenceMode::FrameToFrame) {
        other = frame - 1;
      } else {
        other = anchor_keyframe(model.keyframes, frame);
      }
      if (other < 0) continue;
      auto it = tr.frames.find(other);
      if (it == tr.frames.end()) continue;
      float a[3], b[3];
      if (!color_at(seq, other, it->second.position, a) || !color_at(seq, frame, state.position, b)) continue;
      values.push_back(rms_color_difference(a, b));
    }
  }
  CoherenceResult r;
  r.samples = values.size();
  if (values.empty()) return r;
  double sum = 0;
  for (double v : values) sum += v;
  r.mean = sum / static_cast<double>(values.size());
  double var = 0;
  for (double v : values) var += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(var / static_cast<double>(values.size()));
  return r;
}

std::vector<std::vector<std::size_t>> propagated_counts(const Correspondence4D& model, const LightFieldSequence& seq) {
  const int nf = std::min(model.num_frames, seq.num_frames());
  std::vector<std::vector<std::size_t>> counts(nf, std::vector<std::size_t>(seq.num_views(), 0));
#pragma omp parallel for schedule(static)
  for (int t = 0; t < nf; ++t)
    for (const auto& tr : model.trajectories) {
      if (tr.birth >= t) continue;
      auto it = tr.frames.find(t);
      if (it == tr.frames.end()) continue;
      for (int c = 0; c < seq.num_views(); ++c)
        counts[t][c] += is_visible(it->second.position, seq.array.camera(c), seq.frames[t].depths[c]);
    }
  return counts;
}

double completeness(const Correspondence4D& config_model, const Correspondence4D& full_model,
                    const LightFieldSequence& full_seq) {
  const auto cfg = propagated_counts(config_model, full_seq);
  const auto full = propagated_counts(full_model, full_seq);
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t t = 0; t < full.size(); ++t)
    for (std::size_t c = 0; c < full[t].size(); ++c) {
      if (full[t][c] == 0) continue;
      const std::size_t got = t < cfg.size() ? cfg[t][c] : 0;
      sum += std::min(1.0, static_cast<double>(got) / static_cast<double>(full[t][c]));
      ++n;
    }
  return n ? 100.0 * sum / static_cast<double>(n) : 0.0;
}

std::vector<CameraConfig> default_camera_configs() {
  auto grid = [](std::initializer_list<int> rows, std::initializer_list<int> cols) {
    std::vector<GridPos> out;
    for (int r : rows)
      for (int c : cols) out.push_back({r, c});
    return out;
  };
  return {
      {"config1", grid({0, 3}, {0, 2, 4})},
      {"config2", grid({1, 2}, {0, 1, 2, 3, 4})},
      {"config3", grid({0, 3}, {0, 4})},
      {"config4", grid({1, 2}, {1, 2, 3})},
      {"corner4", grid({0, 3}, {0, 4})},
      {"center4", grid({1, 2}, {1, 3})},
  };
}

ConfiguredSequence apply_camera_config(const LightFieldSequence& seq, const CameraConfig& config) {
  if (config.positions.empty()) fail(ErrorCode::EmptyConfig, "camera config '" + config.name + "' is empty");
  std::set<int> rows, cols;
  std::set<std::pair<int, int>> wanted;
  for (const auto& p : config.positions) {
    if (!seq.array.index_at(p))
      fail(ErrorCode::InvalidArgument, "config '" + config.name + "' names a camera off the array");
    rows.insert(p.row);
    cols.insert(p.col);
    wanted.insert({p.row, p.col});
  }
  if (wanted.size() != rows.size() * cols.size())
    fail(ErrorCode::InvalidArgument, "config '" + config.name + "' is not a rectangular grid subset");

  ConfiguredSequence out;
  std::vector<CameraCalibration> cams;
  const std::vector<int> row_list(rows.begin(), rows.end()), col_list(cols.begin(), cols.end());
  for (std::size_t r = 0; r < row_list.size(); ++r)
    for (std::size_t c = 0; c < col_list.size(); ++c) {
      const int idx = *seq.array.index_at({row_list[r], col_list[c]});
      CameraCalibration cam = seq.array.camera(idx);
      cam.grid = {static_cast<int>(r), static_cast<int>(c)};
      cams.push_back(cam);
      out.views.push_back(idx);
    }

  const GridPos ref = seq.array.camera(seq.array.reference()).grid;
  int new_ref = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < out.views.size(); ++k) {
    const GridPos g = seq.array.camera(out.views[k]).grid;
    const double d = std::hypot(g.row - ref.row, g.col - ref.col);
    if (d < best) {
      best = d;
      new_ref = static_cast<int>(k);
    }
  }
  out.reference_moved = best > 0;

  LightFieldSequence& s = out.sequence;
  s.array = CameraArray(std::move(cams), static_cast<int>(row_list.size()), static_cast<int>(col_list.size()), new_ref);
  s.width = seq.width;
  s.height = seq.height;
  s.frame_rate = seq.frame_rate;
  for (const auto& f : seq.frames) {
    LightFieldFrame nf;
    for (int v : out.views) {
      nf.views.push_back(f.views[v]);
      nf.depths.push_back(f.depths[v]);
    }
    nf.cloud = f.cloud;
    compute_visibility(nf.cloud, s.array, nf.depths);
    s.frames.push_back(std::move(nf));
  }
  return out;
}

EpeResult endpoint_error(const FlowField& estimate, const FlowField& truth, const Mask& region) {
  EpeResult r;
  double sum = 0;
  for (int y = 0; y < truth.height(); ++y)
    for (int x = 0; x < truth.width(); ++x) {
      if (!region(x, y) || !truth.valid(x, y) || truth.occluded(x, y) || !estimate.valid(x, y)) continue;
      sum += (estimate.at(x, y) - truth.at(x, y)).norm();
      ++r.pixels;
    }
  r.mean = r.pixels ? sum / static_cast<double>(r.pixels) : 0.0;
  return r;
}

}  // namespace lfv
