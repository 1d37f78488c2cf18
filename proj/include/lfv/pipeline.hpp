#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "lfv/align4d.hpp"
#include "lfv/epi.hpp"
#include "lfv/eval.hpp"
#include "lfv/features.hpp"
#include "lfv/flow.hpp"
#include "lfv/keyframes.hpp"
#include "lfv/objects.hpp"
#include "lfv/synthetic.hpp"

namespace lfv {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.3.0";

struct PipelineConfig {
  std::uint64_t seed = 7;
  int threads = 1;
  std::string input;   // manifest; empty means the synth stage output
  std::string output = "lfv_out";
  SyntheticSceneSpec synth;

  double cluster_radius = 0.06;
  int cluster_min_size = 10;
  MatchParams match;
  int max_features = 150;
  KeyFrameParams keyframes;
  int mu = 50;
  FlowParams flow;
  bool ablation = true;  // also run the flow with lambda_l = 0
  AlignParams align;
  std::vector<CameraConfig> configs;

  // Throws Error(ConfigError) for out-of-domain values.
  void validate() const;
};

// The bundled demo scene: a textured plane moving in front of a static one,
// seen by a 3 x 3 array.
SyntheticSceneSpec demo_scene();
PipelineConfig default_config();

// JSON with every parameter; parsing rejects unknown keys and fills missing
// ones from the defaults. Errors are ConfigError.
std::string config_to_json(const PipelineConfig& config);
PipelineConfig config_from_json(const std::string& text);

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t fnv1a(const std::string& text);
std::string hex64(std::uint64_t value);
std::uint64_t hash_file(const fs::path& path);
// Hash of the config without the settings that cannot change results
// (output directory, thread count).
std::string config_hash(const PipelineConfig& config);

// Per-frame clusters with ids made consistent across frames; the cloud's
// object ids are overwritten with the cluster ids.
using ClusterSeries = std::vector<std::vector<ObjectCluster>>;
ClusterSeries detect_objects(LightFieldSequence& seq, double radius, int min_size);
int object_count(const ClusterSeries& clusters);

// [frame][object][view]
using FeatureBank = std::vector<std::vector<std::vector<FeatureSet>>>;
using SilhouetteBank = std::vector<std::vector<std::vector<Mask>>>;
FeatureBank compute_features(const LightFieldSequence& seq, const ClusterSeries& clusters, int max_features);
SilhouetteBank compute_silhouettes(const LightFieldSequence& seq, const ClusterSeries& clusters);
// Union of every object silhouette of a view.
Mask object_region(const SilhouetteBank& silhouettes, int frame, int view, int width, int height);

struct TrackingResult {
  KeyFrameSet keyframes;
  TrackSet tracks;
};
TrackingResult select_and_track(const FeatureBank& features, const SilhouetteBank& silhouettes,
                                const KeyFrameParams& kf, const MatchParams& match);

// Seeds for the flow of one view between two frames: tracks observed at both
// frames, else direct feature matches between the two frames.
std::vector<SparseSeed> flow_seeds(const TrackingResult& tracking, const FeatureBank& features,
                                   const MatchParams& match, int view, int from, int to);

// Every flow the 4D model needs.
class FlowBank : public FlowSource {
 public:
  const FlowField& flow(int view, int from, int to) const override;
  bool contains(int view, int from, int to) const;
  void insert(FlowField field);
  const std::map<std::tuple<int, int, int>, FlowField>& all() const noexcept { return flows_; }

 private:
  std::map<std::tuple<int, int, int>, FlowField> flows_;
};

// Frame pairs needing a flow: (t, t + 1) for every t, and (K, j) with K the
// anchor key-frame of j whenever j - K >= 2.
std::vector<std::pair<int, int>> flow_pairs(const KeyFrameSet& keyframes, bool anchors = true);

// Forward flow with occlusion and round trip from a backward estimate.
FlowField compute_flow_pair(const LightFieldSequence& seq, const std::vector<FlowFrame>& frames,
                            const SilhouetteBank& silhouettes, const std::vector<SparseSeed>& seeds, int view,
                            int from, int to, const FlowParams& params);

FlowBank compute_flows(const LightFieldSequence& seq, const SilhouetteBank& silhouettes,
                       const TrackingResult& tracking, const FeatureBank& features, const MatchParams& match,
                       const FlowParams& params, const std::vector<std::pair<int, int>>& pairs);

struct DebugOptions {
  fs::path dir;  // empty: no debug images
};

enum class Stage { Synth, Track, Keyframes, Epi, Flow, Align, Eval };
std::optional<Stage> stage_from_name(const std::string& name);
std::string stage_name(Stage stage);
std::vector<Stage> all_stages();

struct StageReport {
  Stage stage;
  bool skipped = false;
  double seconds = 0;
};

class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::string views = {}, DebugOptions debug = {});

  StageReport run(Stage stage);
  std::vector<StageReport> run_through(Stage last);

  const PipelineConfig& config() const noexcept { return config_; }
  fs::path stage_dir(Stage stage) const;
  fs::path manifest_path() const;

 private:
  LightFieldSequence load() const;
  std::string stage_key(Stage stage) const;
  bool up_to_date(Stage stage, const std::string& key) const;
  void record(Stage stage, const std::string& key, const std::vector<fs::path>& outputs, double seconds) const;

  void run_synth();
  void run_track();
  void run_keyframes();
  void run_epi();
  void run_flow();
  void run_align();
  void run_eval();

  PipelineConfig config_;
  std::string views_;
  DebugOptions debug_;
  fs::path out_;
};

// Camera subset named by a config ("config1") or listed as "r:c,r:c,...".
CameraConfig parse_view_subset(const std::string& text, const std::vector<CameraConfig>& known);

// Exit status of the command line tool for an error code.
int exit_code_for(ErrorCode code);

}  // namespace lfv
