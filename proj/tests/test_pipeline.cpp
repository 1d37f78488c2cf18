#include <gtest/gtest.h>

#include <fstream>
#include <functional>
#include <optional>
#include <sstream>

#include "lfv/io.hpp"
#include "lfv/pipeline.hpp"
#include "support.hpp"

using namespace lfv;

namespace {

std::optional<ErrorCode> code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Demo scene cut down to three small frames.
PipelineConfig tiny_config(const fs::path& out) {
  PipelineConfig c = default_config();
  c.output = out.string();
  c.synth.width = 40;
  c.synth.height = 30;
  c.synth.grid.focal = 50;
  c.synth.frames = 3;
  c.synth.planes[1].motion = {{0, Vec3::Zero(), 0}, {2, Vec3(0.06, 0.0, 0), 0}};
  c.flow.levels = 2;
  c.flow.search_radius = 2;
  c.cluster_min_size = 5;
  c.configs = {{"corners", {{0, 0}, {0, 2}, {2, 0}, {2, 2}}}};
  return c;
}

}  // namespace

TEST(Config, JsonRoundTrip) {
  PipelineConfig c = default_config();
  c.seed = 99;
  c.threads = 3;
  c.match.ratio = 0.7;
  c.flow.lambda_r = 0.25;
  c.keyframes.d_max = 12;
  c.configs = {{"pair", {{0, 0}, {0, 1}}}};
  const std::string text = config_to_json(c);
  const PipelineConfig back = config_from_json(text);
  EXPECT_EQ(config_to_json(back), text);
  EXPECT_EQ(back.seed, 99u);
  EXPECT_EQ(back.configs.size(), 1u);
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, MissingKeysTakeDefaults) {
  const PipelineConfig c = config_from_json(R"({"seed": 5})");
  EXPECT_EQ(c.seed, 5u);
  EXPECT_EQ(c.mu, default_config().mu);
  EXPECT_EQ(c.flow.levels, default_config().flow.levels);
}

TEST(Config, UnknownKeysAndBadValuesAreConfigErrors) {
  EXPECT_EQ(code_of([] { config_from_json(R"({"sed": 5})"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { config_from_json(R"({"flow": {"lambda_x": 1}})"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { config_from_json(R"({"features": {"ratio": 1.0}})"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { config_from_json(R"({"features": {"rule": "median"}})"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { config_from_json(R"({"threads": 0})"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { config_from_json("{not json"); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([] { config_from_json(R"({"seed": "x"})"); }), ErrorCode::ConfigError);
}

TEST(Config, HashIgnoresOutputAndThreads) {
  PipelineConfig a = default_config(), b = default_config();
  b.output = "elsewhere";
  b.threads = 8;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.mu = 30;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Hash, KnownVectors) {
  EXPECT_EQ(fnv1a(std::string()), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a(std::string("a")), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a(std::string("foobar")), 0x85944171f73967e8ull);
  EXPECT_EQ(hex64(0xaf63dc4c8601ec8cull), "af63dc4c8601ec8c");
  EXPECT_EQ(hex64(1), "0000000000000001");
}

TEST(Cli, ViewSubsets) {
  const auto known = default_camera_configs();
  EXPECT_EQ(parse_view_subset("config1", known).positions.size(), 6u);
  const CameraConfig c = parse_view_subset("0:0,1:2", known);
  ASSERT_EQ(c.positions.size(), 2u);
  EXPECT_EQ(c.positions[1], (GridPos{1, 2}));
  EXPECT_EQ(code_of([&] { parse_view_subset("0-0", known); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_view_subset("0:0,", known); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { parse_view_subset("0:0x", known); }), ErrorCode::ConfigError);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(exit_code_for(ErrorCode::ConfigError), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::EmptyConfig), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::MissingFile), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::SchemaMismatch), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::NumericalFailure), 4);
}

TEST(Stages, Names) {
  for (Stage s : all_stages()) EXPECT_EQ(stage_from_name(stage_name(s)), s);
  EXPECT_FALSE(stage_from_name("bogus").has_value());
}

TEST(FlowPairs, ConsecutiveAndAnchors) {
  KeyFrameSet kf;
  kf.keyframes = {0, 4};
  kf.num_frames = 7;
  const auto plain = flow_pairs(kf, false);
  EXPECT_EQ(plain.size(), 6u);
  const auto all = flow_pairs(kf, true);
  const std::vector<std::pair<int, int>> anchors(all.begin() + 6, all.end());
  const std::vector<std::pair<int, int>> expected = {{0, 2}, {0, 3}, {0, 4}, {4, 6}};
  EXPECT_EQ(anchors, expected);
}

TEST(FlowBankTest, MissingFlowThrows) {
  FlowBank bank;
  FlowField f(4, 4);
  f.view = 1;
  f.from_frame = 0;
  f.to_frame = 1;
  bank.insert(f);
  EXPECT_TRUE(bank.contains(1, 0, 1));
  EXPECT_FALSE(bank.contains(0, 0, 1));
  EXPECT_THROW(bank.flow(0, 0, 1), Error);
}

TEST(PipelineRun, StagesProduceOutputsAndCache) {
  test::TempDir tmp("pipe");
  const PipelineConfig c = tiny_config(tmp.path() / "out");
  Pipeline p(c);
  const auto first = p.run_through(Stage::Eval);
  ASSERT_EQ(first.size(), all_stages().size());
  for (const auto& r : first) EXPECT_FALSE(r.skipped) << stage_name(r.stage);
  for (Stage s : all_stages()) EXPECT_TRUE(fs::exists(p.stage_dir(s) / "stage.json")) << stage_name(s);
  const std::string metrics = slurp(p.stage_dir(Stage::Eval) / "metrics.csv");
  EXPECT_NE(metrics.find("full.soe_ratio"), std::string::npos);
  EXPECT_NE(metrics.find("dfwlf.epe_mean"), std::string::npos);
  EXPECT_NE(metrics.find("completeness.corners"), std::string::npos);
  EXPECT_TRUE(fs::exists(p.stage_dir(Stage::Flow) / "full"));

  Pipeline again(c);
  for (const auto& r : again.run_through(Stage::Eval)) EXPECT_TRUE(r.skipped) << stage_name(r.stage);

  // A downstream change reruns only the stages it feeds.
  PipelineConfig changed = c;
  changed.align.anchor_threshold = 2.5;
  Pipeline third(changed);
  for (const auto& r : third.run_through(Stage::Eval))
    EXPECT_EQ(r.skipped, r.stage != Stage::Align && r.stage != Stage::Eval) << stage_name(r.stage);

  // A damaged output invalidates its stage.
  write_text(third.stage_dir(Stage::Keyframes) / "keyframes.txt", "garbage\n");
  EXPECT_FALSE(third.run(Stage::Keyframes).skipped);
  EXPECT_TRUE(third.run(Stage::Keyframes).skipped);
}

TEST(PipelineRun, MissingInputIsDataError) {
  test::TempDir tmp("pipe_missing");
  PipelineConfig c = tiny_config(tmp.path() / "out");
  c.input = (tmp.path() / "nowhere" / "manifest.json").string();
  Pipeline p(c);
  const auto code = code_of([&] { p.run(Stage::Track); });
  ASSERT_TRUE(code.has_value());
  EXPECT_EQ(exit_code_for(*code), 3);
}
