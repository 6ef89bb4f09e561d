#include <cstdio>
#include <exception>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "assoclab/pipeline.hpp"

using assoclab::Error;
using assoclab::ErrorCode;
using assoclab::ExperimentConfig;
using assoclab::Stage;

namespace {

int emit_error(const std::string& command, const std::string& code,
               const std::string& message) {
  nlohmann::json j = {{"error", code}, {"command", command}, {"message", message}};
  std::cerr << j.dump() << "\n";
  return 1;
}

ExperimentConfig load(const std::string& config_path, const std::string& output) {
  auto cfg = assoclab::load_config(config_path);
  if (!output.empty()) cfg.output_dir = output;
  return cfg;
}

int run_stage(const std::string& command, const std::string& config_path,
              const std::string& output, Stage up_to) {
  const auto cfg = load(config_path, output);
  const auto manifest = assoclab::run_experiment(cfg, up_to);
  std::cout << "wrote " << manifest.path << "\n";
  return 0;
}

int run_export_plots(const std::string& config_path, const std::string& output) {
  const auto cfg = load(config_path, output);
  const auto files = assoclab::export_plots(
      cfg.output_dir,
      {assoclab::PlotKind::Accuracy, assoclab::PlotKind::DeltaSByGroupPhase,
       assoclab::PlotKind::InterferenceBreakdown, assoclab::PlotKind::HeatmapCounts,
       assoclab::PlotKind::InterferenceDistribution});
  for (const auto& f : files) std::cout << "wrote " << f << "\n";
  return 0;
}

int run_verify(const std::string& config_path, const std::string& output) {
  const auto cfg = load(config_path, output);
  const auto report = assoclab::verify_run(cfg);
  nlohmann::json j = {{"checks", report.checks},
                      {"discrepancies", report.discrepancies},
                      {"messages", report.messages}};
  std::cout << j.dump(2) << "\n";
  if (report.discrepancies > 0)
    return emit_error("verify", "verification_failed",
                      std::to_string(report.discrepancies) + " discrepancies");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"associative-learning experiment pipeline"};
  app.require_subcommand(1);

  struct Sub {
    std::string config;
    std::string output;
  };
  std::map<std::string, Sub> args;

  const auto add = [&](const std::string& name, const std::string& desc) {
    auto* sub = app.add_subcommand(name, desc);
    auto& a = args[name];
    sub->add_option("--config", a.config, "experiment config (json)")
        ->required()
        ->check(CLI::ExistingFile);
    sub->add_option("--output", a.output, "output directory override");
    return sub;
  };

  add("search-stimuli", "build the stimulus set across similarity groups");
  add("interference", "score vocabulary interference and build the pair pool");
  add("sample-grid", "fill the similarity-by-interference sampling grid");
  add("run-trials", "run repetition trials over the stimulus set");
  add("segment", "segment the accuracy curve into learning phases");
  add("analyze", "aggregate per group and phase with corrected tests");
  add("export-plots", "render figures and plot-data tables from a finished run");
  add("verify", "recompute key quantities and check the exported artifacts");

  CLI11_PARSE(app, argc, argv);
  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  const auto& a = args[name];

  try {
    if (name == "search-stimuli") return run_stage(name, a.config, a.output, Stage::Stimuli);
    if (name == "interference") return run_stage(name, a.config, a.output, Stage::Interference);
    if (name == "sample-grid") return run_stage(name, a.config, a.output, Stage::Grid);
    if (name == "run-trials") return run_stage(name, a.config, a.output, Stage::Trials);
    if (name == "segment") return run_stage(name, a.config, a.output, Stage::Segment);
    if (name == "analyze") return run_stage(name, a.config, a.output, Stage::Analyze);
    if (name == "export-plots") return run_export_plots(a.config, a.output);
    if (name == "verify") return run_verify(a.config, a.output);
    return emit_error(name, "input_error", "unknown subcommand");
  } catch (const Error& e) {
    return emit_error(name, error_code_name(e.code()), e.what());
  } catch (const std::exception& e) {
    return emit_error(name, "unknown", e.what());
  }
}
