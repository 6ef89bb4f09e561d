#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>

#include "assoclab/pipeline.hpp"
#include "assoclab/tsv.hpp"
#include "../support/mock_script.hpp"

using namespace assoclab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ExperimentConfig small_synthetic_config(const fs::path& dir) {
  ExperimentConfig cfg;
  cfg.backend_uri = "synthetic:7:60:16:3";
  cfg.layer = 3;
  cfg.pairs_per_group = 2;
  cfg.restarts = 8;
  cfg.schedule = {1, 2, 3, 4, 5, 6};
  cfg.budget.top_k = 16;
  cfg.budget.max_iterations = 12;
  cfg.subset_size = 24;
  cfg.min_per_bin = 1;
  cfg.output_dir = (dir / "out").string();
  cfg.master_seed = 42;
  return cfg;
}

std::map<std::string, std::string> hash_outputs(const fs::path& dir) {
  std::map<std::string, std::string> hashes;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".tsv")
      hashes[entry.path().filename().string()] = file_hash(entry.path().string());
  }
  return hashes;
}

}  // namespace

TEST_CASE("load_config applies defaults and explicit settings") {
  const auto dir = fresh_dir("assoclab_cfg");
  const auto path = (dir / "config.json").string();
  {
    std::ofstream out(path);
    out << R"({
      "backend": "synthetic:1:40:8:2",
      "layer": 2,
      "schedule": {"from": 1, "to": 5},
      "groups": [[0.1, 0.3], [0.3, 0.5]],
      "pairs_per_group": 3,
      "budget": {"top_k": 9, "use_backtracking": true},
      "interference": {"subset_size": 12, "seed": 77},
      "sampling": {"min_per_bin": 4, "extend_pairs": false},
      "stats": {"q": 0.1, "after_mode": "phase_last"},
      "output_dir": "/tmp/x",
      "master_seed": 5
    })";
  }
  const auto cfg = load_config(path);
  CHECK(cfg.backend_uri == "synthetic:1:40:8:2");
  CHECK(cfg.layer == 2);
  CHECK(cfg.schedule == std::vector<int>{1, 2, 3, 4, 5});
  REQUIRE(cfg.groups.size() == 2);
  CHECK(cfg.groups[1].theta_min == 0.3);
  CHECK(cfg.pairs_per_group == 3);
  CHECK(cfg.restarts == 50);            // default
  CHECK(cfg.budget.top_k == 9);
  CHECK(cfg.budget.max_iterations == 100);  // default
  CHECK(cfg.budget.use_backtracking);
  CHECK(cfg.subset_size == 12);
  CHECK(cfg.subset_seed == 77);
  CHECK(cfg.min_per_bin == 4);
  CHECK(!cfg.extend_pairs);
  CHECK(cfg.q == 0.1);
  CHECK(cfg.after_mode == AfterMode::PhaseLast);
  CHECK(cfg.master_seed == 5);
  CHECK(cfg.memory_cap == 40000);  // default

  CHECK_THROWS_AS(load_config((dir / "missing.json").string()), Error);

  // Snapshots of the same config are identical (used for stage fingerprints).
  CHECK(cfg.snapshot_json() == load_config(path).snapshot_json());
}

TEST_CASE("pipeline end-to-end on a synthetic backend is deterministic") {
  const auto dir = fresh_dir("assoclab_e2e");
  const auto cfg = small_synthetic_config(dir);

  const auto manifest = run_experiment(cfg);
  const fs::path out(cfg.output_dir);
  for (const char* name :
       {"stimuli.tsv", "interference.tsv", "pool.tsv", "stimuli_extended.tsv",
        "grid_fill.tsv", "traces.tsv", "segmentation.tsv", "accuracy.tsv",
        "stats.tsv", "breakdown.tsv", "manifest.json", "accuracy.svg",
        "delta_s_by_group_phase.svg"})
    CHECK(fs::exists(out / name));

  const auto first = hash_outputs(out);
  CHECK(first.size() >= 10);

  // A fresh run in a new directory reproduces every table byte for byte.
  auto cfg2 = cfg;
  cfg2.output_dir = (dir / "out2").string();
  run_experiment(cfg2);
  auto second = hash_outputs(cfg2.output_dir);
  CHECK(first == second);

  // Verification recomputes key quantities without discrepancies.
  const auto report = verify_run(cfg);
  CHECK(report.checks > 100);
  CHECK(report.discrepancies == 0);
  CHECK(manifest.path == (out / "manifest.json").string());
}

TEST_CASE("pipeline resumes: unchanged stages are skipped, deleted outputs rebuilt") {
  const auto dir = fresh_dir("assoclab_resume");
  const auto cfg = small_synthetic_config(dir);
  run_experiment(cfg, Stage::Analyze);
  const fs::path out(cfg.output_dir);

  const auto traces_before = fs::last_write_time(out / "traces.tsv");
  const auto stats_hash = file_hash((out / "stats.tsv").string());

  // Unchanged rerun rewrites nothing.
  run_experiment(cfg, Stage::Analyze);
  CHECK(fs::last_write_time(out / "traces.tsv") == traces_before);

  // Removing one artifact reruns only the stage that produces it.
  fs::remove(out / "stats.tsv");
  run_experiment(cfg, Stage::Analyze);
  CHECK(fs::exists(out / "stats.tsv"));
  CHECK(file_hash((out / "stats.tsv").string()) == stats_hash);
  CHECK(fs::last_write_time(out / "traces.tsv") == traces_before);

  // Changing the analysis settings reruns analyze but not trials.
  auto cfg2 = cfg;
  cfg2.q = 0.2;
  run_experiment(cfg2, Stage::Analyze);
  CHECK(fs::last_write_time(out / "traces.tsv") == traces_before);
}

TEST_CASE("export_plots demands the artifacts it renders") {
  const auto dir = fresh_dir("assoclab_plots");
  try {
    export_plots(dir.string(), {PlotKind::Accuracy});
    FAIL("expected missing artifact");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingArtifact);
  }
}

TEST_CASE("golden mock run rejects exactly the scripted consolidation cell") {
  const auto dir = fresh_dir("assoclab_golden");

  // Two similarity groups of two pairs each; only the high-similarity group's
  // consolidation cosines drop (by 0.200 and 0.202). Prediction is correct
  // only for r in [2, 4], which pins encoding to r1-2, consolidation to
  // r3-4 and forgetting to r5-6.
  testing::MockScriptBuilder b(64);
  b.model_id("golden");
  struct PairSpec {
    TokenId x, y;
    double before, drop;
  };
  const std::vector<PairSpec> pairs{{2, 3, 0.32, 0.0},
                                    {4, 5, 0.34, 0.0},
                                    {6, 7, 0.62, 0.200},
                                    {8, 9, 0.64, 0.202}};
  for (const auto& ps : pairs) {
    std::vector<testing::MockScriptBuilder::RepSpec> reps;
    for (int r = 1; r <= 6; ++r) {
      const bool cons = r == 3 || r == 4;
      reps.push_back({r, cons ? ps.before - ps.drop : ps.before, r >= 2 && r <= 4});
    }
    b.pair(ps.x, ps.y, ps.before, reps);
  }
  const auto script = b.write((dir / "golden.json").string());

  const auto stimuli_path = (dir / "stimuli_in.tsv").string();
  {
    TsvWriter out(stimuli_path, {"x", "y"});
    for (const auto& ps : pairs)
      out.row({std::to_string(ps.x), std::to_string(ps.y)});
  }

  ExperimentConfig cfg;
  cfg.backend_uri = "mock:" + script;
  cfg.layer = 1;
  cfg.schedule = {1, 2, 3, 4, 5, 6};
  cfg.stimuli_file = stimuli_path;
  cfg.extend_pairs = false;
  cfg.subset_size = 16;
  cfg.output_dir = (dir / "out").string();
  cfg.master_seed = 9;
  run_experiment(cfg);

  const auto seg = read_tsv((fs::path(cfg.output_dir) / "segmentation.tsv").string());
  REQUIRE(seg.size() == 1);
  CHECK(seg[0].at("encoding_start") == "1");
  CHECK(seg[0].at("encoding_end") == "2");
  CHECK(seg[0].at("consolidation_start") == "3");
  CHECK(seg[0].at("consolidation_end") == "4");
  CHECK(seg[0].at("forgetting_start") == "5");

  int rejected = 0;
  for (const auto& row : read_tsv((fs::path(cfg.output_dir) / "stats.tsv").string())) {
    if (row.at("rejected") != "1") continue;
    ++rejected;
    CHECK(row.at("group_index") == "10");  // [0.60, 0.65)
    CHECK(row.at("phase") == "Consolidation");
    CHECK(std::stod(row.at("mean_delta_s")) == doctest::Approx(-0.201).epsilon(1e-9));
    CHECK(std::stod(row.at("n")) == 4);
  }
  CHECK(rejected == 1);

  const auto report = verify_run(cfg);
  CHECK(report.discrepancies == 0);
}
