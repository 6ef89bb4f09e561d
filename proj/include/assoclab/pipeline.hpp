#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "assoclab/backend.hpp"
#include "assoclab/interference.hpp"
#include "assoclab/phases.hpp"
#include "assoclab/search.hpp"
#include "assoclab/stats.hpp"

namespace assoclab {

struct ExperimentConfig {
  std::string backend_uri;
  std::optional<int> layer;  // default: last layer
  std::vector<SimilarityGroup> groups = default_similarity_groups();
  int pairs_per_group = 12;
  int restarts = 50;
  std::vector<int> schedule;
  SearchBudget budget;
  VocabularyFilter filter;
  int subset_size = 1000;
  std::optional<std::uint64_t> subset_seed;  // default: derived from master
  int min_per_bin = 10;
  std::optional<std::vector<double>> interference_bin_edges;  // default: deciles
  bool extend_pairs = true;
  double q = 0.05;
  AfterMode after_mode = AfterMode::PhaseMean;
  PhaseThresholds thresholds;
  std::string output_dir = "out";
  std::uint64_t master_seed = 0;
  int memory_cap = 40000;
  // Externally supplied stimuli (tsv with x, y columns); skips the search.
  std::optional<std::string> stimuli_file;

  std::string snapshot_json() const;  // fully resolved config
};

ExperimentConfig load_config(const std::string& path);

enum class Stage { Stimuli, Interference, Grid, Trials, Segment, Analyze, Plots };
const char* stage_name(Stage s);

struct RunManifest {
  std::string path;       // manifest.json location
  std::string json_text;  // serialized manifest
};

// Runs stages in order with hash-based resumability: a stage whose recorded
// input fingerprint and output hashes still match is skipped. `up_to` limits
// how far the pipeline advances.
RunManifest run_experiment(const ExperimentConfig& config,
                           Stage up_to = Stage::Plots);

enum class PlotKind {
  Accuracy,
  DeltaSByGroupPhase,
  InterferenceBreakdown,
  HeatmapCounts,
  InterferenceDistribution,
};

std::vector<std::string> export_plots(const std::string& results_dir,
                                      const std::set<PlotKind>& kinds);

struct VerifyReport {
  int checks = 0;
  int discrepancies = 0;
  std::vector<std::string> messages;
};

// Independently recomputes before_sim, the delta_s identity at r = 1, and the
// BY rejection flags from the raw exports.
VerifyReport verify_run(const ExperimentConfig& config);

// FNV-1a 64 over file bytes, hex-encoded; used for manifest artifact hashes.
std::string file_hash(const std::string& path);

}  // namespace assoclab
