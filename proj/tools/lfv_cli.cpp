// lfv: command line front end of the light-field video pipeline.

#include <chrono>
#include <cstdio>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lfv/io.hpp"
#include "lfv/pipeline.hpp"

namespace {

using nlohmann::ordered_json;

struct Options {
  std::string config_path;
  bool dump_config = false;
  std::string stage;
  std::string views;
  std::string debug_dir;
  std::string output;
  int threads = 0;
};

void error_record(const std::string& code, int exit_code, const std::string& stage, const std::string& message,
                  const std::string& output) {
  ordered_json j;
  j["status"] = "error";
  j["code"] = code;
  j["exit"] = exit_code;
  j["stage"] = stage;
  j["message"] = message;
  std::cerr << j.dump() << std::endl;
  if (output.empty()) return;
  try {
    lfv::write_text(lfv::fs::path(output) / "error.json", j.dump(2) + "\n");
  } catch (...) {
  }
}

lfv::PipelineConfig load_config(const Options& opt) {
  lfv::PipelineConfig config = lfv::default_config();
  if (!opt.config_path.empty()) {
    std::string text;
    try {
      text = lfv::read_text(opt.config_path);
    } catch (const lfv::Error& e) {
      lfv::fail(lfv::ErrorCode::ConfigError, e.what());
    }
    config = lfv::config_from_json(text);
  }
  if (!opt.output.empty()) config.output = opt.output;
  if (opt.threads > 0) config.threads = opt.threads;
  config.validate();
  return config;
}

int run(const std::string& command, const Options& opt) {
  std::string current_stage;
  std::string output;
  try {
    const lfv::PipelineConfig config = load_config(opt);
    output = config.output;
    if (opt.dump_config) {
      std::cout << lfv::config_to_json(config);
      return 0;
    }

    std::vector<lfv::Stage> stages;
    if (command == "all") {
      lfv::Stage last = lfv::Stage::Eval;
      if (!opt.stage.empty()) {
        auto s = lfv::stage_from_name(opt.stage);
        if (!s) lfv::fail(lfv::ErrorCode::ConfigError, "unknown stage '" + opt.stage + "'");
        last = *s;
      }
      for (lfv::Stage s : lfv::all_stages()) {
        if (!(s == lfv::Stage::Synth && !config.input.empty())) stages.push_back(s);
        if (s == last) break;
      }
    } else {
      if (!opt.stage.empty() && opt.stage != command)
        lfv::fail(lfv::ErrorCode::ConfigError, "--stage " + opt.stage + " conflicts with subcommand " + command);
      stages.push_back(*lfv::stage_from_name(command));
    }

    lfv::DebugOptions debug;
    debug.dir = opt.debug_dir;
    lfv::Pipeline pipeline(config, opt.views, debug);
    ordered_json manifest;
    manifest["version"] = lfv::kVersion;
    manifest["command"] = command;
    manifest["config_hash"] = lfv::config_hash(config);
    manifest["views"] = opt.views;
    manifest["threads"] = config.threads;
    ordered_json runs = ordered_json::array();
    for (lfv::Stage s : stages) {
      current_stage = lfv::stage_name(s);
      const lfv::StageReport r = pipeline.run(s);
      if (r.skipped)
        std::printf("%-10s up to date\n", current_stage.c_str());
      else
        std::printf("%-10s done in %.2f s\n", current_stage.c_str(), r.seconds);
      std::fflush(stdout);
      ordered_json j;
      j["stage"] = current_stage;
      j["skipped"] = r.skipped;
      j["seconds"] = r.seconds;
      runs.push_back(j);
    }
    manifest["stages"] = runs;
    lfv::write_text(lfv::fs::path(config.output) / "run.json", manifest.dump(2) + "\n");
    const auto report = pipeline.stage_dir(lfv::Stage::Eval) / "report.txt";
    if (stages.back() == lfv::Stage::Eval && lfv::fs::exists(report)) std::cout << lfv::read_text(report);
    return 0;
  } catch (const lfv::Error& e) {
    const int code = lfv::exit_code_for(e.code());
    error_record(lfv::to_string(e.code()), code, current_stage, e.what(), output);
    return code;
  } catch (const std::exception& e) {
    error_record("InternalError", 3, current_stage, e.what(), output);
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Light-field video temporal coherence pipeline"};
  app.require_subcommand(1, 1);
  app.fallthrough();
  Options opt;
  app.add_option("--config", opt.config_path, "JSON config file (defaults apply to missing keys)");
  app.add_flag("--dump-config", opt.dump_config, "Print the effective config with every default and exit");
  app.add_option("--stage", opt.stage, "With 'all': last stage to run");
  app.add_option("--views", opt.views, "Camera subset: a config name or row:col,row:col,...");
  app.add_option("--debug-images", opt.debug_dir, "Directory for debug images");
  app.add_option("--output", opt.output, "Output directory (overrides the config)");
  app.add_option("--threads", opt.threads, "Worker threads (overrides the config)");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"synth", "Render the synthetic dataset"},
      {"track", "Segment objects and extract features"},
      {"keyframes", "Select key-frames and build sparse tracks"},
      {"epi", "Fit EPI lines and check depth"},
      {"flow", "Estimate dense flows (and the lambda_l = 0 ablation)"},
      {"align", "Build the 4D temporally coherent model"},
      {"eval", "Compute the evaluation metrics"},
      {"all", "Run every stage in order"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    error_record("ConfigError", 2, "", e.what(), "");
    return 2;
  }
  const std::string command = app.get_subcommands().front()->get_name();
  return run(command, opt);
}
