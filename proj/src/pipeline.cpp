#include "lfv/pipeline.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"
#include "lfv/io.hpp"

namespace lfv {

using ojson = nlohmann::ordered_json;
using json = nlohmann::json;

// ---------------------------------------------------------------- config

SyntheticSceneSpec demo_scene() {
  SyntheticSceneSpec s;
  s.grid.rows = 3;
  s.grid.cols = 3;
  s.grid.baseline_x = 0.05;
  s.grid.baseline_y = 0.05;
  s.grid.reference = {1, 1};
  s.grid.focal = 80.0;
  s.width = 64;
  s.height = 48;
  s.frames = 8;
  s.noise_sigma = 0.01;
  s.min_wavelength = 0.12;
  s.max_wavelength = 0.5;

  PlaneSpec back;
  back.center = Vec3(0, 0, 3.0);
  back.width = 3.0;
  back.height = 2.4;
  back.texture_id = 0;
  back.object_id = 1;
  back.point_spacing = 0.04;

  PlaneSpec front;
  front.center = Vec3(0, 0, 1.8);
  front.width = 0.6;
  front.height = 0.5;
  front.texture_id = 1;
  front.object_id = 0;
  front.point_spacing = 0.02;
  front.motion = {{0, Vec3::Zero(), 0}, {7, Vec3(0.2, 0.05, 0), 5}};

  s.planes = {back, front};
  return s;
}

PipelineConfig default_config() {
  PipelineConfig c;
  c.synth = demo_scene();
  c.flow.search_radius = 3;
  c.flow.levels = 3;
  c.flow.sigma = 1.5;
  c.configs = default_camera_configs();
  return c;
}

void PipelineConfig::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::ConfigError, what); };
  if (threads < 1) bad("threads must be >= 1");
  if (output.empty()) bad("output must be set");
  if (!(cluster_radius > 0)) bad("objects.radius must be > 0");
  if (cluster_min_size < 1) bad("objects.min_size must be >= 1");
  if (!(match.ratio > 0 && match.ratio < 1)) bad("features.ratio must be in (0, 1)");
  if (match.coherence_window < 1) bad("features.window must be >= 1");
  if (max_features < 0) bad("features.max_features must be >= 0");
  if (keyframes.d_max < 1) bad("keyframes.d_max must be >= 1");
  if (!(keyframes.threshold >= 0 && keyframes.threshold <= 1)) bad("keyframes.threshold must be in [0, 1]");
  if (mu < 1) bad("epi.mu must be >= 1");
  try {
    flow.validate();
  } catch (const Error& e) {
    bad(std::string("flow: ") + e.what());
  }
  if (!(align.anchor_threshold > 0)) bad("align.anchor_threshold must be > 0");
  if (!(align.link_radius >= 0)) bad("align.link_radius must be >= 0");
  if (!(align.visibility_tolerance > 0)) bad("align.visibility_tolerance must be > 0");
  for (const auto& cfg : configs) {
    if (cfg.name.empty()) bad("eval.configs entries need a name");
    if (cfg.positions.empty()) bad("eval.configs '" + cfg.name + "' is empty");
  }
  if (input.empty()) {
    const auto& s = synth;
    if (s.frames < 2) bad("synth.frames must be >= 2");
    if (s.width < 8 || s.height < 8) bad("synth image must be at least 8x8");
    if (s.grid.rows < 1 || s.grid.cols < 1 || s.grid.rows * s.grid.cols > kMaxViews)
      bad("synth.grid must have 1.." + std::to_string(kMaxViews) + " cameras");
    if (s.grid.reference.row < 0 || s.grid.reference.row >= s.grid.rows || s.grid.reference.col < 0 ||
        s.grid.reference.col >= s.grid.cols)
      bad("synth.grid.reference is off the grid");
    if (!(s.grid.focal > 0)) bad("synth.grid.focal must be > 0");
    if (s.planes.empty()) bad("synth.planes must not be empty");
    if (!(s.min_wavelength > 0 && s.max_wavelength >= s.min_wavelength)) bad("synth wavelength band is invalid");
    if (s.texture_components < 1) bad("synth.texture_components must be >= 1");
    if (!(s.noise_sigma >= 0)) bad("synth.noise_sigma must be >= 0");
    for (const auto& p : s.planes) {
      if (!(p.width > 0 && p.height > 0)) bad("plane size must be > 0");
      if (!(p.point_spacing > 0)) bad("plane point_spacing must be > 0");
    }
  }
}

namespace {

ojson vec3_json(const Vec3& v) { return ojson::array({v.x(), v.y(), v.z()}); }

const char* rule_name(CoherenceRule r) {
  return r == CoherenceRule::DisplacementMagnitude ? "magnitude" : "deviation";
}

ojson synth_json(const SyntheticSceneSpec& s) {
  ojson grid;
  grid["rows"] = s.grid.rows;
  grid["cols"] = s.grid.cols;
  grid["baseline_x"] = s.grid.baseline_x;
  grid["baseline_y"] = s.grid.baseline_y;
  grid["reference"] = ojson::array({s.grid.reference.row, s.grid.reference.col});
  grid["focal"] = s.grid.focal;
  grid["yaw_perturbation_deg"] = s.grid.yaw_perturbation_deg;
  ojson planes = ojson::array();
  for (const auto& p : s.planes) {
    ojson j;
    j["center"] = vec3_json(p.center);
    j["axis_u"] = vec3_json(p.axis_u);
    j["axis_v"] = vec3_json(p.axis_v);
    j["width"] = p.width;
    j["height"] = p.height;
    j["texture_id"] = p.texture_id;
    j["object_id"] = p.object_id;
    j["point_spacing"] = p.point_spacing;
    ojson motion = ojson::array();
    for (const auto& k : p.motion) {
      ojson m;
      m["frame"] = k.frame;
      m["translation"] = vec3_json(k.translation);
      m["rotation_deg"] = k.rotation_deg;
      motion.push_back(m);
    }
    j["motion"] = motion;
    planes.push_back(j);
  }
  ojson j;
  j["width"] = s.width;
  j["height"] = s.height;
  j["frames"] = s.frames;
  j["frame_rate"] = s.frame_rate;
  j["noise_sigma"] = s.noise_sigma;
  j["min_wavelength"] = s.min_wavelength;
  j["max_wavelength"] = s.max_wavelength;
  j["texture_components"] = s.texture_components;
  j["grid"] = grid;
  j["planes"] = planes;
  return j;
}

ojson flow_json(const FlowParams& f, bool ablation) {
  ojson j;
  j["lambda_l"] = f.lambda_l;
  j["lambda_c"] = f.lambda_c;
  j["lambda_r"] = f.lambda_r;
  j["lambda_rl"] = f.lambda_rl;
  j["lambda_rc"] = f.lambda_rc;
  j["search_radius"] = f.search_radius;
  j["levels"] = f.levels;
  j["scale"] = f.scale;
  j["iterations"] = f.iterations;
  j["tau_occ"] = f.tau_occ;
  j["sparse_radius"] = f.sparse_radius;
  j["seed_radius"] = f.seed_radius;
  j["c_inf"] = f.c_inf;
  j["sigma"] = f.sigma;
  j["d_ref"] = f.d_ref;
  j["compensate_disparity"] = f.compensate_disparity;
  j["subpixel"] = f.subpixel;
  j["ablation"] = ablation;
  return j;
}

ojson configs_json(const std::vector<CameraConfig>& configs) {
  ojson arr = ojson::array();
  for (const auto& c : configs) {
    ojson pos = ojson::array();
    for (const auto& p : c.positions) pos.push_back(ojson::array({p.row, p.col}));
    ojson j;
    j["name"] = c.name;
    j["positions"] = pos;
    arr.push_back(j);
  }
  return arr;
}

ojson section_json(const PipelineConfig& c, const std::string& name) {
  ojson j;
  if (name == "objects") {
    j["radius"] = c.cluster_radius;
    j["min_size"] = c.cluster_min_size;
  } else if (name == "features") {
    j["ratio"] = c.match.ratio;
    j["window"] = c.match.coherence_window;
    j["rule"] = rule_name(c.match.rule);
    j["max_features"] = c.max_features;
  } else if (name == "keyframes") {
    j["d_max"] = c.keyframes.d_max;
    j["threshold"] = c.keyframes.threshold;
  } else if (name == "epi") {
    j["mu"] = c.mu;
  } else if (name == "flow") {
    j = flow_json(c.flow, c.ablation);
  } else if (name == "align") {
    j["anchor_threshold"] = c.align.anchor_threshold;
    j["link_radius"] = c.align.link_radius;
    j["visibility_tolerance"] = c.align.visibility_tolerance;
  } else if (name == "eval") {
    j["configs"] = configs_json(c.configs);
  } else if (name == "synth") {
    j = synth_json(c.synth);
  }
  return j;
}

// Reads keys of one JSON object, remembering which ones were consumed so that
// leftovers can be reported as unknown.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorCode::ConfigError, "'" + name() + "' must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      fail(ErrorCode::ConfigError, "'" + where(key) + "' has the wrong type");
    }
  }

  void get_vec3(const char* key, Vec3& out) {
    std::vector<double> v;
    if (!j_.contains(key)) {
      used_.insert(key);
      return;
    }
    get(key, v);
    if (v.size() != 3) fail(ErrorCode::ConfigError, "'" + where(key) + "' must hold 3 numbers");
    out = Vec3(v[0], v[1], v[2]);
  }

  void get_grid(const char* key, GridPos& out) {
    std::vector<int> v;
    if (!j_.contains(key)) {
      used_.insert(key);
      return;
    }
    get(key, v);
    if (v.size() != 2) fail(ErrorCode::ConfigError, "'" + where(key) + "' must be [row, col]");
    out = {v[0], v[1]};
  }

  bool has(const char* key) const { return j_.contains(key); }
  const json& raw(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }

  Section child(const char* key) {
    used_.insert(key);
    static const json empty = json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, where(key));
  }

  std::string where(const char* key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string name() const { return path_.empty() ? "<root>" : path_; }

  void finish() const {
    for (const auto& [k, _] : j_.items())
      if (!used_.count(k)) fail(ErrorCode::ConfigError, "unknown key '" + where(k.c_str()) + "'");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void read_synth(Section s, SyntheticSceneSpec& spec) {
  s.get("width", spec.width);
  s.get("height", spec.height);
  s.get("frames", spec.frames);
  s.get("frame_rate", spec.frame_rate);
  s.get("noise_sigma", spec.noise_sigma);
  s.get("min_wavelength", spec.min_wavelength);
  s.get("max_wavelength", spec.max_wavelength);
  s.get("texture_components", spec.texture_components);
  {
    Section g = s.child("grid");
    g.get("rows", spec.grid.rows);
    g.get("cols", spec.grid.cols);
    g.get("baseline_x", spec.grid.baseline_x);
    g.get("baseline_y", spec.grid.baseline_y);
    g.get_grid("reference", spec.grid.reference);
    g.get("focal", spec.grid.focal);
    g.get("yaw_perturbation_deg", spec.grid.yaw_perturbation_deg);
    g.finish();
  }
  if (s.has("planes")) {
    const json& arr = s.raw("planes");
    if (!arr.is_array()) fail(ErrorCode::ConfigError, "'synth.planes' must be an array");
    spec.planes.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section p(arr[i], "synth.planes[" + std::to_string(i) + "]");
      PlaneSpec plane;
      p.get_vec3("center", plane.center);
      p.get_vec3("axis_u", plane.axis_u);
      p.get_vec3("axis_v", plane.axis_v);
      p.get("width", plane.width);
      p.get("height", plane.height);
      p.get("texture_id", plane.texture_id);
      p.get("object_id", plane.object_id);
      p.get("point_spacing", plane.point_spacing);
      if (p.has("motion")) {
        const json& ms = p.raw("motion");
        if (!ms.is_array()) fail(ErrorCode::ConfigError, "'" + p.where("motion") + "' must be an array");
        for (std::size_t k = 0; k < ms.size(); ++k) {
          Section m(ms[k], p.where("motion") + "[" + std::to_string(k) + "]");
          MotionKey key;
          m.get("frame", key.frame);
          m.get_vec3("translation", key.translation);
          m.get("rotation_deg", key.rotation_deg);
          m.finish();
          plane.motion.push_back(key);
        }
      }
      p.finish();
      spec.planes.push_back(plane);
    }
  }
  s.finish();
}

}  // namespace

std::string config_to_json(const PipelineConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["threads"] = c.threads;
  j["input"] = c.input;
  j["output"] = c.output;
  for (const char* name : {"synth", "objects", "features", "keyframes", "epi", "flow", "align", "eval"})
    j[name] = section_json(c, name);
  return j.dump(2) + "\n";
}

PipelineConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig c = default_config();
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("threads", c.threads);
  root.get("input", c.input);
  root.get("output", c.output);
  read_synth(root.child("synth"), c.synth);
  {
    Section s = root.child("objects");
    s.get("radius", c.cluster_radius);
    s.get("min_size", c.cluster_min_size);
    s.finish();
  }
  {
    Section s = root.child("features");
    s.get("ratio", c.match.ratio);
    s.get("window", c.match.coherence_window);
    std::string rule = rule_name(c.match.rule);
    s.get("rule", rule);
    if (rule == "magnitude") c.match.rule = CoherenceRule::DisplacementMagnitude;
    else if (rule == "deviation") c.match.rule = CoherenceRule::DeviationFromMean;
    else fail(ErrorCode::ConfigError, "'features.rule' must be 'magnitude' or 'deviation'");
    s.get("max_features", c.max_features);
    s.finish();
  }
  {
    Section s = root.child("keyframes");
    s.get("d_max", c.keyframes.d_max);
    s.get("threshold", c.keyframes.threshold);
    s.finish();
  }
  {
    Section s = root.child("epi");
    s.get("mu", c.mu);
    s.finish();
  }
  {
    Section s = root.child("flow");
    FlowParams& f = c.flow;
    s.get("lambda_l", f.lambda_l);
    s.get("lambda_c", f.lambda_c);
    s.get("lambda_r", f.lambda_r);
    s.get("lambda_rl", f.lambda_rl);
    s.get("lambda_rc", f.lambda_rc);
    s.get("search_radius", f.search_radius);
    s.get("levels", f.levels);
    s.get("scale", f.scale);
    s.get("iterations", f.iterations);
    s.get("tau_occ", f.tau_occ);
    s.get("sparse_radius", f.sparse_radius);
    s.get("seed_radius", f.seed_radius);
    s.get("c_inf", f.c_inf);
    s.get("sigma", f.sigma);
    s.get("d_ref", f.d_ref);
    s.get("compensate_disparity", f.compensate_disparity);
    s.get("subpixel", f.subpixel);
    s.get("ablation", c.ablation);
    s.finish();
  }
  {
    Section s = root.child("align");
    s.get("anchor_threshold", c.align.anchor_threshold);
    s.get("link_radius", c.align.link_radius);
    s.get("visibility_tolerance", c.align.visibility_tolerance);
    s.finish();
  }
  {
    Section s = root.child("eval");
    if (s.has("configs")) {
      const json& arr = s.raw("configs");
      if (!arr.is_array()) fail(ErrorCode::ConfigError, "'eval.configs' must be an array");
      c.configs.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Section e(arr[i], "eval.configs[" + std::to_string(i) + "]");
        CameraConfig cfg;
        e.get("name", cfg.name);
        std::vector<std::vector<int>> pos;
        e.get("positions", pos);
        for (const auto& p : pos) {
          if (p.size() != 2) fail(ErrorCode::ConfigError, "'" + e.where("positions") + "' entries must be [row, col]");
          cfg.positions.push_back({p[0], p[1]});
        }
        e.finish();
        c.configs.push_back(cfg);
      }
    }
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

// ---------------------------------------------------------------- hashing

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& text) { return fnv1a(text.data(), text.size()); }

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::uint64_t hash_file(const fs::path& path) { return fnv1a(read_text(path)); }

std::string config_hash(const PipelineConfig& config) {
  PipelineConfig c = config;
  c.output.clear();
  c.threads = 1;
  return hex64(fnv1a(config_to_json(c)));
}

// ---------------------------------------------------------------- stages in memory

ClusterSeries detect_objects(LightFieldSequence& seq, double radius, int min_size) {
  ClusterSeries out(seq.frames.size());
  for (std::size_t f = 0; f < seq.frames.size(); ++f) {
    auto& cloud = seq.frames[f].cloud;
    if (cloud.empty()) fail(ErrorCode::EmptyCloud, "frame " + std::to_string(f) + " has an empty cloud");
    out[f] = cluster_objects(cloud, radius, min_size);
    if (f > 0) associate_clusters(out[f - 1], out[f]);
    std::sort(out[f].begin(), out[f].end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    assign_object_ids(cloud, out[f]);
  }
  return out;
}

int object_count(const ClusterSeries& clusters) {
  int n = 0;
  for (const auto& frame : clusters)
    for (const auto& c : frame) n = std::max(n, c.id + 1);
  return n;
}

FeatureBank compute_features(const LightFieldSequence& seq, const ClusterSeries& clusters, int max_features) {
  const int nf = seq.num_frames(), nv = seq.num_views(), no = object_count(clusters);
  FeatureBank bank(nf, std::vector<std::vector<FeatureSet>>(no, std::vector<FeatureSet>(nv)));
#pragma omp parallel for schedule(static)
  for (int f = 0; f < nf; ++f) {
    const LightFieldFrame& frame = seq.frames[f];
    for (int v = 0; v < nv; ++v) {
      const Image gray = to_luma(frame.views[v]);
      for (int o = 0; o < no; ++o) {
        FeatureSet& set = bank[f][o][v];
        set.view = v;
        set.frame = f;
        set.object = o;
      }
      for (const auto& cluster : clusters[f]) {
        try {
          bank[f][cluster.id][v] = extract_features(gray, frame.cloud, cluster, seq.array.camera(v), v, f,
                                                    static_cast<std::size_t>(max_features));
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NotVisible) throw;
        }
      }
    }
  }
  return bank;
}

SilhouetteBank compute_silhouettes(const LightFieldSequence& seq, const ClusterSeries& clusters) {
  const int nf = seq.num_frames(), nv = seq.num_views(), no = object_count(clusters);
  SilhouetteBank bank(nf, std::vector<std::vector<Mask>>(no, std::vector<Mask>(nv, Mask(seq.width, seq.height, 0))));
#pragma omp parallel for schedule(static)
  for (int f = 0; f < nf; ++f)
    for (const auto& cluster : clusters[f])
      for (int v = 0; v < nv; ++v) {
        try {
          bank[f][cluster.id][v] =
              object_silhouette(cluster, seq.frames[f].cloud, seq.array.camera(v), v, seq.width, seq.height);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NotVisible) throw;
        }
      }
  return bank;
}

Mask object_region(const SilhouetteBank& silhouettes, int frame, int view, int width, int height) {
  Mask region(width, height, 0);
  for (const auto& object : silhouettes.at(frame)) {
    const Mask& m = object.at(view);
    for (std::size_t i = 0; i < m.size(); ++i) region[i] |= m[i];
  }
  return region;
}

TrackingResult select_and_track(const FeatureBank& features, const SilhouetteBank& silhouettes,
                                const KeyFrameParams& kf, const MatchParams& match) {
  TrackingResult out;
  FeatureScorer scorer(features, silhouettes, match);
  out.keyframes = select_keyframes(scorer, kf);
  const int no = features.empty() ? 0 : static_cast<int>(features[0].size());
  const int nv = no == 0 ? 0 : static_cast<int>(features[0][0].size());
  int next_id = 0;
  for (std::size_t k = 0; k < out.keyframes.keyframes.size(); ++k) {
    const auto [begin, end] = out.keyframes.segment(k);
    for (int v = 0; v < nv; ++v)
      for (int o = 0; o < no; ++o) {
        if (features[begin][o][v].size() == 0) continue;
        std::vector<FeatureSet> segment;
        for (int f = begin; f < end; ++f) segment.push_back(features[f][o][v]);
        TrackSet ts = build_tracks(segment, match, next_id);
        next_id += static_cast<int>(ts.size());
        for (auto& t : ts.tracks) out.tracks.tracks.push_back(std::move(t));
      }
  }
  return out;
}

std::vector<SparseSeed> flow_seeds(const TrackingResult& tracking, const FeatureBank& features,
                                   const MatchParams& match, int view, int from, int to) {
  std::vector<SparseSeed> seeds;
  for (const auto& t : tracking.tracks.tracks) {
    if (t.view != view) continue;
    auto a = t.observations.find(from), b = t.observations.find(to);
    if (a == t.observations.end() || b == t.observations.end()) continue;
    seeds.push_back({a->second.pixel, b->second.pixel - a->second.pixel});
  }
  if (!seeds.empty()) return seeds;
  const std::size_t no = features.at(from).size();
  for (std::size_t o = 0; o < no; ++o) {
    const FeatureSet& fa = features[from][o].at(view);
    const FeatureSet& fb = features.at(to)[o].at(view);
    if (fa.size() < 2 || fb.size() < 2) continue;
    for (const Match& m : match_keyframes(fa, fb, match).matches)
      seeds.push_back({fa.features[m.a].pixel, fb.features[m.b].pixel - fa.features[m.a].pixel});
  }
  return seeds;
}

const FlowField& FlowBank::flow(int view, int from, int to) const {
  auto it = flows_.find({view, from, to});
  if (it == flows_.end())
    fail(ErrorCode::MissingFile, "no flow for view " + std::to_string(view) + " frames " + std::to_string(from) +
                                     " -> " + std::to_string(to));
  return it->second;
}

bool FlowBank::contains(int view, int from, int to) const { return flows_.count({view, from, to}) != 0; }

void FlowBank::insert(FlowField field) {
  const auto key = std::make_tuple(field.view, field.from_frame, field.to_frame);
  flows_.insert_or_assign(key, std::move(field));
}

std::vector<std::pair<int, int>> flow_pairs(const KeyFrameSet& keyframes, bool anchors) {
  std::vector<std::pair<int, int>> pairs;
  for (int t = 0; t + 1 < keyframes.num_frames; ++t) pairs.emplace_back(t, t + 1);
  if (anchors)
    for (int j = 1; j < keyframes.num_frames; ++j) {
      const int k = anchor_keyframe(keyframes.keyframes, j);
      if (k >= 0 && j - k >= 2) pairs.emplace_back(k, j);
    }
  return pairs;
}

namespace {

FlowField empty_flow(int w, int h, int view, int from, int to) {
  FlowField f(w, h);
  f.view = view;
  f.from_frame = from;
  f.to_frame = to;
  return f;
}

void check_finite(const FlowField& f) {
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x)
      if (f.valid(x, y) && !(std::isfinite(f.u(x, y)) && std::isfinite(f.v(x, y))))
        fail(ErrorCode::NumericalFailure, "non-finite flow in view " + std::to_string(f.view));
}

}  // namespace

FlowField compute_flow_pair(const LightFieldSequence& seq, const std::vector<FlowFrame>& frames,
                            const SilhouetteBank& silhouettes, const std::vector<SparseSeed>& seeds, int view,
                            int from, int to, const FlowParams& params) {
  const int w = seq.width, h = seq.height;
  const Mask region = object_region(silhouettes, from, view, w, h);
  if (count_nonzero(region) == 0) return empty_flow(w, h, view, from, to);
  FlowField fwd = estimate_flow_field(seq.array, view, frames.at(from), frames.at(to), region, seeds, params);
  fwd.view = view;
  fwd.from_frame = from;
  fwd.to_frame = to;
  check_finite(fwd);

  const Mask back_region = object_region(silhouettes, to, view, w, h);
  FlowField bwd = empty_flow(w, h, view, to, from);
  if (count_nonzero(back_region) > 0) {
    std::vector<SparseSeed> reversed;
    reversed.reserve(seeds.size());
    for (const auto& s : seeds) reversed.push_back({s.pixel + s.displacement, -s.displacement});
    bwd = estimate_flow_field(seq.array, view, frames.at(to), frames.at(from), back_region, reversed, params);
  }
  fwd.occluded = detect_occlusions(fwd, bwd, params.tau_occ, &fwd.round_trip);
  return fwd;
}

FlowBank compute_flows(const LightFieldSequence& seq, const SilhouetteBank& silhouettes,
                       const TrackingResult& tracking, const FeatureBank& features, const MatchParams& match,
                       const FlowParams& params, const std::vector<std::pair<int, int>>& pairs) {
  std::vector<FlowFrame> frames;
  frames.reserve(seq.frames.size());
  for (const auto& f : seq.frames) frames.push_back(make_flow_frame(f));
  FlowBank bank;
  for (const auto& [from, to] : pairs)
    for (int v = 0; v < seq.num_views(); ++v) {
      const auto seeds = flow_seeds(tracking, features, match, v, from, to);
      bank.insert(compute_flow_pair(seq, frames, silhouettes, seeds, v, from, to, params));
    }
  return bank;
}

// ---------------------------------------------------------------- stages on disk

std::optional<Stage> stage_from_name(const std::string& name) {
  for (Stage s : all_stages())
    if (stage_name(s) == name) return s;
  return std::nullopt;
}

std::string stage_name(Stage stage) {
  switch (stage) {
    case Stage::Synth: return "synth";
    case Stage::Track: return "track";
    case Stage::Keyframes: return "keyframes";
    case Stage::Epi: return "epi";
    case Stage::Flow: return "flow";
    case Stage::Align: return "align";
    case Stage::Eval: return "eval";
  }
  return "?";
}

std::vector<Stage> all_stages() {
  return {Stage::Synth, Stage::Track, Stage::Keyframes, Stage::Epi, Stage::Flow, Stage::Align, Stage::Eval};
}

CameraConfig parse_view_subset(const std::string& text, const std::vector<CameraConfig>& known) {
  for (const auto& c : known)
    if (c.name == text) return c;
  CameraConfig out;
  out.name = text;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string::npos) end = text.size();
    const std::string item = text.substr(start, end - start);
    start = end + 1;
    int r = 0, c = 0;
    char colon = 0;
    std::istringstream is(item);
    if (!(is >> r >> colon >> c) || colon != ':' || !(is >> std::ws).eof())
      fail(ErrorCode::ConfigError, "views '" + text + "' is neither a config name nor a list of row:col");
    out.positions.push_back({r, c});
  }
  if (out.positions.empty()) fail(ErrorCode::ConfigError, "views subset is empty");
  return out;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::EmptyConfig:
      return 2;
    case ErrorCode::NumericalFailure:
    case ErrorCode::DegenerateHomography:
      return 4;
    default:
      return 3;
  }
}

namespace {

std::string flow_name(int view, int from, int to) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "v%02d_%04d_%04d", view, from, to);
  return buf;
}

std::string format_objects(const ClusterSeries& clusters) {
  std::ostringstream os;
  os << "# lfv-objects 1\nframes " << clusters.size() << "\n";
  for (std::size_t f = 0; f < clusters.size(); ++f)
    for (const auto& c : clusters[f]) {
      os << "object " << f << ' ' << c.id << ' ' << c.members.size();
      for (std::size_t m : c.members) os << ' ' << m;
      os << "\n";
    }
  return os.str();
}

ClusterSeries parse_objects(const std::string& text, LightFieldSequence& seq) {
  std::istringstream is(text);
  std::string line;
  ClusterSeries out;
  bool header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      header = header || line == "# lfv-objects 1";
      continue;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "frames") {
      std::size_t n = 0;
      if (!(ls >> n)) fail(ErrorCode::ParseError, "objects: bad frames line");
      out.assign(n, {});
    } else if (key == "object") {
      std::size_t f = 0, n = 0;
      ObjectCluster c;
      if (!(ls >> f >> c.id >> n) || f >= out.size() || f >= seq.frames.size())
        fail(ErrorCode::ParseError, "objects: bad object line");
      const auto& cloud = seq.frames[f].cloud;
      c.members.resize(n);
      for (auto& m : c.members)
        if (!(ls >> m) || m >= cloud.size()) fail(ErrorCode::ParseError, "objects: bad member index");
      if (n == 0) fail(ErrorCode::ParseError, "objects: empty object");
      c.bbox_min = c.bbox_max = cloud.points[c.members.front()];
      Vec3 sum = Vec3::Zero();
      for (std::size_t i : c.members) {
        const Vec3& p = cloud.points[i];
        c.bbox_min = c.bbox_min.cwiseMin(p);
        c.bbox_max = c.bbox_max.cwiseMax(p);
        sum += p;
      }
      c.centroid = sum / static_cast<double>(c.members.size());
      out[f].push_back(std::move(c));
    } else {
      fail(ErrorCode::ParseError, "objects: unknown record '" + key + "'");
    }
  }
  if (!header) fail(ErrorCode::SchemaMismatch, "objects file lacks its header");
  if (out.size() != seq.frames.size()) fail(ErrorCode::SchemaMismatch, "objects file frame count mismatch");
  for (std::size_t f = 0; f < out.size(); ++f) assign_object_ids(seq.frames[f].cloud, out[f]);
  return out;
}

std::string format_features(const FeatureBank& bank) {
  std::ostringstream os;
  os << "# lfv-features 1\n";
  char buf[160];
  for (const auto& frame : bank)
    for (const auto& object : frame)
      for (const auto& set : object)
        for (const auto& f : set.features) {
          std::snprintf(buf, sizeof buf, "%d %d %d %lld %zu %.17g %.17g\n", set.frame, set.object, set.view,
                        static_cast<long long>(f.point_id), f.cloud_index, f.pixel.x(), f.pixel.y());
          os << buf;
        }
  return os.str();
}

// Flow as a colour image: red and green encode u and v around 0.5, blue marks
// usable pixels.
Image flow_image(const FlowField& f) {
  double peak = 1e-9;
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x)
      if (f.valid(x, y)) peak = std::max(peak, static_cast<double>(f.at(x, y).norm()));
  Image img(f.width(), f.height(), 3, 0.0f);
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) {
      if (!f.valid(x, y)) continue;
      img.at(x, y, 0) = static_cast<float>(0.5 + 0.5 * f.u(x, y) / peak);
      img.at(x, y, 1) = static_cast<float>(0.5 + 0.5 * f.v(x, y) / peak);
      img.at(x, y, 2) = f.usable(x, y) ? 1.0f : 0.0f;
    }
  return img;
}

void save_flow(const FlowField& f, const fs::path& dir, std::vector<fs::path>& outputs) {
  const std::string base = flow_name(f.view, f.from_frame, f.to_frame);
  write_flow(f, dir / (base + ".flo"));
  write_mask_png(f.occluded, dir / (base + ".occ.png"));
  write_pfm(f.round_trip, dir / (base + ".rt.pfm"));
  for (const char* ext : {".flo", ".occ.png", ".rt.pfm"}) outputs.push_back(dir / (base + ext));
}

FlowField load_flow(const fs::path& dir, int view, int from, int to) {
  const std::string base = flow_name(view, from, to);
  FlowField f = read_flow(dir / (base + ".flo"));
  f.view = view;
  f.from_frame = from;
  f.to_frame = to;
  const Image occ = read_png(dir / (base + ".occ.png"));
  const DepthMap rt = read_pfm(dir / (base + ".rt.pfm"));
  if (occ.width() != f.width() || occ.height() != f.height() || rt.width() != f.width() || rt.height() != f.height())
    fail(ErrorCode::SchemaMismatch, "flow side files of " + base + " differ in size");
  for (int y = 0; y < f.height(); ++y)
    for (int x = 0; x < f.width(); ++x) f.occluded(x, y) = occ.at(x, y) > 0.5f;
  f.round_trip = rt;
  return f;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config, std::string views, DebugOptions debug)
    : config_(std::move(config)), views_(std::move(views)), debug_(std::move(debug)), out_(config_.output) {
  config_.validate();
  if (!views_.empty()) parse_view_subset(views_, config_.configs);
  omp_set_num_threads(config_.threads);
}

fs::path Pipeline::stage_dir(Stage stage) const { return out_ / stage_name(stage); }

fs::path Pipeline::manifest_path() const {
  if (!config_.input.empty()) return expand_data_root(config_.input);
  return stage_dir(Stage::Synth) / "data" / "manifest.json";
}

LightFieldSequence Pipeline::load() const {
  LightFieldSequence seq = load_sequence(manifest_path());
  if (views_.empty()) return seq;
  const CameraConfig subset = parse_view_subset(views_, config_.configs);
  try {
    return apply_camera_config(seq, subset).sequence;
  } catch (const Error& e) {
    fail(ErrorCode::ConfigError, std::string("views: ") + e.what());
  }
}

std::string Pipeline::stage_key(Stage stage) const {
  std::string text = std::string(kVersion) + "|" + stage_name(stage) + "|";
  auto upstream = [&](Stage s) { text += stage_key(s) + "|"; };
  switch (stage) {
    case Stage::Synth:
      text += std::to_string(config_.seed) + section_json(config_, "synth").dump();
      break;
    case Stage::Track:
      if (config_.input.empty()) {
        upstream(Stage::Synth);
      } else {
        const SequenceManifest m = load_manifest(manifest_path());
        text += hex64(hash_file(manifest_path()));
        auto add = [&](const fs::path& p) { text += hex64(hash_file(p)); };
        add(m.calibration);
        for (const auto& row : m.images)
          for (const auto& p : row) add(p);
        for (const auto& row : m.depths)
          for (const auto& p : row) add(p);
        for (const auto& p : m.clouds) add(p);
      }
      text += "views=" + views_ + section_json(config_, "objects").dump() + section_json(config_, "features").dump();
      break;
    case Stage::Keyframes:
      upstream(Stage::Track);
      text += section_json(config_, "keyframes").dump();
      break;
    case Stage::Epi:
      upstream(Stage::Keyframes);
      text += section_json(config_, "epi").dump();
      break;
    case Stage::Flow:
      upstream(Stage::Keyframes);
      text += section_json(config_, "flow").dump();
      break;
    case Stage::Align:
      upstream(Stage::Flow);
      text += section_json(config_, "align").dump();
      break;
    case Stage::Eval:
      upstream(Stage::Align);
      text += section_json(config_, "eval").dump();
      break;
  }
  return hex64(fnv1a(text));
}

bool Pipeline::up_to_date(Stage stage, const std::string& key) const {
  const fs::path record_path = stage_dir(stage) / "stage.json";
  if (!fs::exists(record_path)) return false;
  try {
    const json j = json::parse(read_text(record_path));
    if (j.at("key").get<std::string>() != key) return false;
    for (const auto& [name, hash] : j.at("outputs").items()) {
      const fs::path p = stage_dir(stage) / name;
      if (!fs::exists(p) || hex64(hash_file(p)) != hash.get<std::string>()) return false;
    }
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

void Pipeline::record(Stage stage, const std::string& key, const std::vector<fs::path>& outputs,
                      double seconds) const {
  const fs::path dir = stage_dir(stage);
  ojson j;
  j["stage"] = stage_name(stage);
  j["version"] = kVersion;
  j["key"] = key;
  j["config_hash"] = config_hash(config_);
  j["views"] = views_;
  ojson inputs = ojson::object();
  auto input = [&](Stage s) { inputs[stage_name(s)] = stage_key(s); };
  switch (stage) {
    case Stage::Synth: break;
    case Stage::Track:
      if (config_.input.empty()) input(Stage::Synth);
      else inputs["manifest"] = hex64(hash_file(manifest_path()));
      break;
    case Stage::Keyframes: input(Stage::Track); break;
    case Stage::Epi: input(Stage::Keyframes); break;
    case Stage::Flow: input(Stage::Keyframes); break;
    case Stage::Align: input(Stage::Flow); break;
    case Stage::Eval: input(Stage::Align); break;
  }
  j["inputs"] = inputs;
  std::vector<std::string> names;
  for (const auto& p : outputs) names.push_back(fs::relative(p, dir).generic_string());
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  ojson out = ojson::object();
  for (const auto& n : names) out[n] = hex64(hash_file(dir / n));
  j["outputs"] = out;
  write_text(dir / "stage.json", j.dump(2) + "\n");

  ojson run;
  run["stage"] = stage_name(stage);
  run["version"] = kVersion;
  run["config_hash"] = j["config_hash"];
  run["threads"] = config_.threads;
  run["seconds"] = seconds;
  write_text(dir / "run.json", run.dump(2) + "\n");
}

StageReport Pipeline::run(Stage stage) {
  StageReport report{stage};
  const std::string key = stage_key(stage);
  if (up_to_date(stage, key)) {
    report.skipped = true;
    return report;
  }
  const auto start = std::chrono::steady_clock::now();
  switch (stage) {
    case Stage::Synth: run_synth(); break;
    case Stage::Track: run_track(); break;
    case Stage::Keyframes: run_keyframes(); break;
    case Stage::Epi: run_epi(); break;
    case Stage::Flow: run_flow(); break;
    case Stage::Align: run_align(); break;
    case Stage::Eval: run_eval(); break;
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  // run_* leave their output list in outputs.txt
  std::vector<fs::path> outputs;
  {
    std::istringstream is(read_text(stage_dir(stage) / "outputs.txt"));
    std::string line;
    while (std::getline(is, line))
      if (!line.empty()) outputs.push_back(stage_dir(stage) / line);
  }
  outputs.push_back(stage_dir(stage) / "outputs.txt");
  record(stage, key, outputs, report.seconds);
  return report;
}

std::vector<StageReport> Pipeline::run_through(Stage last) {
  std::vector<StageReport> reports;
  for (Stage s : all_stages()) {
    if (s == Stage::Synth && !config_.input.empty()) continue;
    reports.push_back(run(s));
    if (s == last) break;
  }
  return reports;
}

namespace {

void write_outputs(const fs::path& dir, const std::vector<fs::path>& outputs) {
  std::vector<std::string> names;
  for (const auto& p : outputs) names.push_back(fs::relative(p, dir).generic_string());
  std::sort(names.begin(), names.end());
  names.erase(std::unique(names.begin(), names.end()), names.end());
  std::string text;
  for (const auto& n : names) text += n + "\n";
  write_text(dir / "outputs.txt", text);
}

void reset_dir(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
}

std::vector<fs::path> files_under(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

void Pipeline::run_synth() {
  const fs::path dir = stage_dir(Stage::Synth);
  reset_dir(dir);
  const SyntheticOutput syn = generate_synthetic(config_.synth, config_.seed);
  save_sequence(syn.sequence, dir / "data");
  const fs::path truth = dir / "truth";
  fs::create_directories(truth);
  for (std::size_t t = 0; t < syn.truth.flow.size(); ++t)
    for (std::size_t v = 0; v < syn.truth.flow[t].size(); ++v) {
      const FlowField& f = syn.truth.flow[t][v];
      char buf[64];
      std::snprintf(buf, sizeof buf, "flow_v%02zu_%04zu", v, t);
      write_flow(f, truth / (std::string(buf) + ".flo"));
      write_mask_png(f.occluded, truth / (std::string(buf) + ".occ.png"));
    }
  write_text(dir / "scene.json", section_json(config_, "synth").dump(2) + "\n");
  write_outputs(dir, files_under(dir));
}

void Pipeline::run_track() {
  const fs::path dir = stage_dir(Stage::Track);
  reset_dir(dir);
  LightFieldSequence seq = load();
  const ClusterSeries clusters = detect_objects(seq, config_.cluster_radius, config_.cluster_min_size);
  const FeatureBank features = compute_features(seq, clusters, config_.max_features);
  write_text(dir / "objects.txt", format_objects(clusters));
  write_text(dir / "features.txt", format_features(features));
  if (!debug_.dir.empty()) {
    const SilhouetteBank sil = compute_silhouettes(seq, clusters);
    const fs::path dbg = debug_.dir / "track";
    fs::create_directories(dbg);
    const int ref = seq.array.reference();
    for (std::size_t f = 0; f < sil.size(); ++f)
      for (std::size_t o = 0; o < sil[f].size(); ++o) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "silhouette_f%04zu_o%02zu.png", f, o);
        write_mask_png(sil[f][o][ref], dbg / buf);
      }
  }
  write_outputs(dir, {dir / "objects.txt", dir / "features.txt"});
}

void Pipeline::run_keyframes() {
  const fs::path dir = stage_dir(Stage::Keyframes);
  reset_dir(dir);
  LightFieldSequence seq = load();
  const ClusterSeries clusters = parse_objects(read_text(stage_dir(Stage::Track) / "objects.txt"), seq);
  const FeatureBank features = compute_features(seq, clusters, config_.max_features);
  const SilhouetteBank sil = compute_silhouettes(seq, clusters);
  const TrackingResult tracking = select_and_track(features, sil, config_.keyframes, config_.match);
  write_text(dir / "keyframes.txt", format_keyframes(tracking.keyframes));
  write_tracks(tracking.tracks, dir / "tracks.txt");
  write_outputs(dir, {dir / "keyframes.txt", dir / "tracks.txt"});
}

void Pipeline::run_epi() {
  const fs::path dir = stage_dir(Stage::Epi);
  reset_dir(dir);
  LightFieldSequence seq = load();
  const ClusterSeries clusters = parse_objects(read_text(stage_dir(Stage::Track) / "objects.txt"), seq);
  const KeyFrameSet kf = parse_keyframes(read_text(stage_dir(Stage::Keyframes) / "keyframes.txt"));
  const CameraCalibration& ref = seq.array.reference_camera();

  std::ostringstream csv;
  csv << "frame,object,direction,array_line,point_id,slope,rms,inliers,depth,point_depth\n";
  std::vector<double> rel_errors;
  std::size_t skipped = 0;
  for (int k : kf.keyframes) {
    const LightFieldFrame& frame = seq.frames.at(k);
    std::map<std::int64_t, std::size_t> by_id;
    for (std::size_t i = 0; i < frame.cloud.size(); ++i) by_id[frame.cloud.point_ids[i]] = i;
    for (const auto& cluster : clusters.at(k))
      for (EpiDirection dir_kind : {EpiDirection::Horizontal, EpiDirection::Vertical}) {
        EpiVolume vol;
        try {
          vol = build_epi_volume(frame, seq.array, cluster, dir_kind, config_.mu);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::DegenerateBaseline) throw;
          ++skipped;
          continue;
        }
        if (!debug_.dir.empty() && !vol.epis.empty()) {
          const fs::path dbg = debug_.dir / "epi";
          fs::create_directories(dbg);
          const Epi& mid = vol.epis[vol.epis.size() / 2];
          char buf[96];
          std::snprintf(buf, sizeof buf, "epi_f%04d_o%02d_%s_%03d.png", k, cluster.id,
                        dir_kind == EpiDirection::Horizontal ? "h" : "v", mid.image_line);
          write_png(vol.plot(mid), dbg / buf);
        }
        for (const PointLine& pl : fit_point_lines(vol)) {
          double z = 0;
          auto it = by_id.find(pl.point_id);
          if (it != by_id.end()) {
            const auto proj = try_project(frame.cloud.points[it->second], ref);
            if (proj) z = proj->depth;
          }
          if (z > 0 && std::isfinite(pl.line.depth)) rel_errors.push_back(std::abs(pl.line.depth - z) / z);
          char buf[256];
          std::snprintf(buf, sizeof buf, "%d,%d,%s,%d,%lld,%.9g,%.9g,%zu,%.9g,%.9g\n", k, cluster.id,
                        dir_kind == EpiDirection::Horizontal ? "h" : "v", pl.array_line,
                        static_cast<long long>(pl.point_id), pl.line.slope, pl.line.rms, pl.line.inliers.size(),
                        pl.line.depth, z);
          csv << buf;
        }
      }
  }
  write_text(dir / "lines.csv", csv.str());
  std::sort(rel_errors.begin(), rel_errors.end());
  ojson summary;
  summary["lines"] = rel_errors.size();
  summary["skipped_volumes"] = skipped;
  summary["median_relative_depth_error"] = rel_errors.empty() ? 0.0 : rel_errors[rel_errors.size() / 2];
  write_text(dir / "summary.json", summary.dump(2) + "\n");
  write_outputs(dir, {dir / "lines.csv", dir / "summary.json"});
}

void Pipeline::run_flow() {
  const fs::path dir = stage_dir(Stage::Flow);
  reset_dir(dir);
  LightFieldSequence seq = load();
  const ClusterSeries clusters = parse_objects(read_text(stage_dir(Stage::Track) / "objects.txt"), seq);
  const FeatureBank features = compute_features(seq, clusters, config_.max_features);
  const SilhouetteBank sil = compute_silhouettes(seq, clusters);
  TrackingResult tracking;
  tracking.keyframes = parse_keyframes(read_text(stage_dir(Stage::Keyframes) / "keyframes.txt"));
  tracking.tracks = read_tracks(stage_dir(Stage::Keyframes) / "tracks.txt");

  std::vector<fs::path> outputs;
  const FlowBank full =
      compute_flows(seq, sil, tracking, features, config_.match, config_.flow, flow_pairs(tracking.keyframes));
  fs::create_directories(dir / "full");
  for (const auto& [key, f] : full.all()) save_flow(f, dir / "full", outputs);

  if (config_.ablation) {
    FlowParams p = config_.flow;
    p.lambda_l = 0;
    const FlowBank ablated =
        compute_flows(seq, sil, tracking, features, config_.match, p, flow_pairs(tracking.keyframes, false));
    fs::create_directories(dir / "dfwlf");
    for (const auto& [key, f] : ablated.all()) save_flow(f, dir / "dfwlf", outputs);
  }
  if (!debug_.dir.empty()) {
    const fs::path dbg = debug_.dir / "flow";
    fs::create_directories(dbg);
    const int ref = seq.array.reference();
    for (const auto& [key, f] : full.all())
      if (f.view == ref) write_png(flow_image(f), dbg / (flow_name(f.view, f.from_frame, f.to_frame) + ".png"));
  }
  write_outputs(dir, outputs);
}

namespace {

FlowBank load_flows(const fs::path& dir, const KeyFrameSet& kf, int views, bool anchors) {
  FlowBank bank;
  for (const auto& [from, to] : flow_pairs(kf, anchors))
    for (int v = 0; v < views; ++v) bank.insert(load_flow(dir, v, from, to));
  return bank;
}

}  // namespace

void Pipeline::run_align() {
  const fs::path dir = stage_dir(Stage::Align);
  reset_dir(dir);
  LightFieldSequence seq = load();
  parse_objects(read_text(stage_dir(Stage::Track) / "objects.txt"), seq);
  const KeyFrameSet kf = parse_keyframes(read_text(stage_dir(Stage::Keyframes) / "keyframes.txt"));
  const TrackSet tracks = read_tracks(stage_dir(Stage::Keyframes) / "tracks.txt");
  const FlowBank flows = load_flows(stage_dir(Stage::Flow) / "full", kf, seq.num_views(), true);
  const Correspondence4D model = build_4d_model(seq, kf, tracks, flows, config_.align);
  write_text(dir / "model.txt", format_correspondence(model));
  write_outputs(dir, {dir / "model.txt"});
}

void Pipeline::run_eval() {
  const fs::path dir = stage_dir(Stage::Eval);
  reset_dir(dir);
  LightFieldSequence seq = load();
  const ClusterSeries clusters = parse_objects(read_text(stage_dir(Stage::Track) / "objects.txt"), seq);
  const SilhouetteBank sil = compute_silhouettes(seq, clusters);
  const KeyFrameSet kf = parse_keyframes(read_text(stage_dir(Stage::Keyframes) / "keyframes.txt"));
  const Correspondence4D model = parse_correspondence(read_text(stage_dir(Stage::Align) / "model.txt"));

  // original view index of every view, for the ground truth files
  std::vector<int> original(seq.num_views());
  for (int v = 0; v < seq.num_views(); ++v) original[v] = v;
  if (!views_.empty()) {
    const LightFieldSequence full_seq = load_sequence(manifest_path());
    original = apply_camera_config(full_seq, parse_view_subset(views_, config_.configs)).views;
  }
  const fs::path truth = stage_dir(Stage::Synth) / "truth";
  const bool have_truth = config_.input.empty() && fs::exists(truth);

  std::vector<std::pair<std::string, double>> metrics;
  auto flow_metrics = [&](const std::string& label, const fs::path& flow_dir) {
    const FlowBank bank = load_flows(flow_dir, kf, seq.num_views(), false);
    std::vector<Mask> propagated, reference;
    double epe_sum = 0;
    std::size_t epe_pixels = 0;
    for (int t = 0; t + 1 < seq.num_frames(); ++t)
      for (int v = 0; v < seq.num_views(); ++v) {
        const FlowField& f = bank.flow(v, t, t + 1);
        for (std::size_t o = 0; o < sil[t].size(); ++o) {
          if (count_nonzero(sil[t][o][v]) == 0) continue;
          propagated.push_back(propagate_mask(sil[t][o][v], f));
          reference.push_back(sil[t + 1][o][v]);
        }
        if (have_truth) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "flow_v%02d_%04d", original[v], t);
          FlowField gt = read_flow(truth / (std::string(buf) + ".flo"));
          const Image occ = read_png(truth / (std::string(buf) + ".occ.png"));
          for (int y = 0; y < gt.height(); ++y)
            for (int x = 0; x < gt.width(); ++x) gt.occluded(x, y) = occ.at(x, y) > 0.5f;
          const EpeResult e = endpoint_error(f, gt, object_region(sil, t, v, seq.width, seq.height));
          epe_sum += e.mean * static_cast<double>(e.pixels);
          epe_pixels += e.pixels;
        }
      }
    const SoeResult soe = silhouette_overlap_error(propagated, reference);
    metrics.push_back({label + ".soe_ratio", soe.ratio});
    metrics.push_back({label + ".soe_error", soe.soe_error});
    metrics.push_back({label + ".soe_error_percent", 100.0 * soe.soe_error});
    metrics.push_back({label + ".soe_pairs", static_cast<double>(soe.pairs)});
    if (have_truth) {
      metrics.push_back({label + ".epe_mean", epe_pixels ? epe_sum / static_cast<double>(epe_pixels) : 0.0});
      metrics.push_back({label + ".epe_pixels", static_cast<double>(epe_pixels)});
    }
  };
  flow_metrics("full", stage_dir(Stage::Flow) / "full");
  if (config_.ablation) flow_metrics("dfwlf", stage_dir(Stage::Flow) / "dfwlf");

  const CoherenceResult f2f = temporal_coherence(model, seq, CoherenceMode::FrameToFrame);
  const CoherenceResult k2f = temporal_coherence(model, seq, CoherenceMode::KeyframeToFrame);
  metrics.push_back({"coherence.frame_to_frame.mean", f2f.mean});
  metrics.push_back({"coherence.frame_to_frame.stddev", f2f.stddev});
  metrics.push_back({"coherence.keyframe_to_frame.mean", k2f.mean});
  metrics.push_back({"coherence.keyframe_to_frame.stddev", k2f.stddev});
  metrics.push_back({"model.trajectories", static_cast<double>(model.trajectories.size())});
  metrics.push_back({"model.keyframes", static_cast<double>(kf.keyframes.size())});

  std::vector<std::string> notes;
  for (const auto& cfg : config_.configs) {
    ConfiguredSequence sub;
    try {
      sub = apply_camera_config(seq, cfg);
    } catch (const Error& e) {
      notes.push_back("config " + cfg.name + " skipped: " + e.what());
      continue;
    }
    if (sub.reference_moved) notes.push_back("config " + cfg.name + ": reference view re-designated");
    LightFieldSequence& s = sub.sequence;
    const ClusterSeries sc = detect_objects(s, config_.cluster_radius, config_.cluster_min_size);
    const FeatureBank sf = compute_features(s, sc, config_.max_features);
    const SilhouetteBank ss = compute_silhouettes(s, sc);
    const TrackingResult st = select_and_track(sf, ss, config_.keyframes, config_.match);
    const FlowBank flows = compute_flows(s, ss, st, sf, config_.match, config_.flow, flow_pairs(st.keyframes));
    const Correspondence4D sub_model = build_4d_model(s, st.keyframes, st.tracks, flows, config_.align);
    metrics.push_back({"completeness." + cfg.name, completeness(sub_model, model, seq)});
  }

  for (const auto& [name, value] : metrics)
    if (!std::isfinite(value)) fail(ErrorCode::NumericalFailure, "metric " + name + " is not finite");

  std::ostringstream csv, report;
  csv << "metric,value\n";
  report << "lfv evaluation report\n";
  report << "frames " << seq.num_frames() << ", views " << seq.num_views() << ", keyframes";
  for (int k : kf.keyframes) report << ' ' << k;
  report << "\n\n";
  for (const auto& [name, value] : metrics) {
    csv << name << ',' << fmt(value) << "\n";
    report << name << " = " << fmt(value) << "\n";
  }
  if (!notes.empty()) {
    report << "\n";
    for (const auto& n : notes) report << "note: " << n << "\n";
  }
  write_text(dir / "metrics.csv", csv.str());
  write_text(dir / "report.txt", report.str());
  write_outputs(dir, {dir / "metrics.csv", dir / "report.txt"});
}

}  // namespace lfv
