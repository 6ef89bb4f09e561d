#include "assoclab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include <nlohmann/json.hpp>

#include "assoclab/icl.hpp"
#include "assoclab/rng.hpp"
#include "assoclab/svg_plot.hpp"
#include "assoclab/tsv.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace assoclab {

namespace {

std::uint64_t fnv1a(const std::string& data, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::int64_t now_seconds() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingArtifact, "cannot hash " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
    if (!in) break;
  }
  return hex64(h);
}

std::string ExperimentConfig::snapshot_json() const {
  json j;
  j["backend"] = backend_uri;
  if (layer) j["layer"] = *layer;
  json groups_json = json::array();
  for (const auto& g : groups) groups_json.push_back({g.theta_min, g.theta_max});
  j["groups"] = groups_json;
  j["pairs_per_group"] = pairs_per_group;
  j["restarts"] = restarts;
  j["schedule"] = schedule;
  j["budget"] = {{"top_k", budget.top_k},
                 {"max_iterations", budget.max_iterations},
                 {"armijo_alpha", budget.armijo_alpha},
                 {"shrink_beta", budget.shrink_beta},
                 {"gradient_bound_floor", budget.gradient_bound_floor},
                 {"use_backtracking", budget.use_backtracking}};
  j["filter"] = {{"exclude_stopwords", filter.exclude_stopwords},
                 {"exclude_punctuation", filter.exclude_punctuation},
                 {"exclude_numerals", filter.exclude_numerals}};
  if (filter.allowlist_path) j["filter"]["allowlist"] = *filter.allowlist_path;
  j["interference"] = {{"subset_size", subset_size}};
  if (subset_seed) j["interference"]["seed"] = *subset_seed;
  j["sampling"] = {{"min_per_bin", min_per_bin}, {"extend_pairs", extend_pairs}};
  if (interference_bin_edges) j["sampling"]["bin_edges"] = *interference_bin_edges;
  j["stats"] = {{"q", q},
                {"after_mode",
                 after_mode == AfterMode::PhaseMean ? "phase_mean" : "phase_last"}};
  j["phases"] = {{"rise", thresholds.rise},
                 {"peak_fraction", thresholds.peak_fraction},
                 {"band", thresholds.band},
                 {"drop", thresholds.drop}};
  j["output_dir"] = output_dir;
  j["master_seed"] = master_seed;
  j["memory_cap"] = memory_cap;
  if (stimuli_file) j["stimuli_file"] = *stimuli_file;
  return j.dump(2);
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InputError, "cannot read config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InputError, "config parse failure: " + std::string(e.what()));
  }

  ExperimentConfig cfg;
  cfg.backend_uri = j.at("backend").get<std::string>();
  if (j.contains("layer") && !j["layer"].is_null()) cfg.layer = j["layer"].get<int>();
  if (j.contains("groups")) {
    cfg.groups.clear();
    const auto& g = j["groups"];
    if (g.is_array()) {
      int idx = 0;
      for (const auto& pair : g)
        cfg.groups.push_back(SimilarityGroup{idx++, pair.at(0).get<double>(),
                                             pair.at(1).get<double>()});
    } else {
      const int count = g.at("count").get<int>();
      const double start = g.at("start").get<double>();
      const double width = g.at("width").get<double>();
      for (int i = 0; i < count; ++i)
        cfg.groups.push_back(
            SimilarityGroup{i, start + width * i, start + width * (i + 1)});
    }
  }
  cfg.pairs_per_group = j.value("pairs_per_group", cfg.pairs_per_group);
  cfg.restarts = j.value("restarts", cfg.restarts);
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    if (s.is_array()) {
      cfg.schedule = s.get<std::vector<int>>();
    } else {
      for (int r = s.at("from").get<int>(); r <= s.at("to").get<int>(); ++r)
        cfg.schedule.push_back(r);
    }
  }
  if (j.contains("budget")) {
    const auto& b = j["budget"];
    cfg.budget.top_k = b.value("top_k", cfg.budget.top_k);
    cfg.budget.max_iterations = b.value("max_iterations", cfg.budget.max_iterations);
    cfg.budget.armijo_alpha = b.value("armijo_alpha", cfg.budget.armijo_alpha);
    cfg.budget.shrink_beta = b.value("shrink_beta", cfg.budget.shrink_beta);
    cfg.budget.gradient_bound_floor =
        b.value("gradient_bound_floor", cfg.budget.gradient_bound_floor);
    cfg.budget.use_backtracking =
        b.value("use_backtracking", cfg.budget.use_backtracking);
  }
  if (j.contains("filter")) {
    const auto& f = j["filter"];
    cfg.filter.exclude_stopwords = f.value("exclude_stopwords", false);
    cfg.filter.exclude_punctuation = f.value("exclude_punctuation", false);
    cfg.filter.exclude_numerals = f.value("exclude_numerals", false);
    if (f.contains("allowlist")) cfg.filter.allowlist_path = f["allowlist"].get<std::string>();
  }
  if (j.contains("interference")) {
    const auto& i = j["interference"];
    cfg.subset_size = i.value("subset_size", cfg.subset_size);
    if (i.contains("seed")) cfg.subset_seed = i["seed"].get<std::uint64_t>();
  }
  if (j.contains("sampling")) {
    const auto& s = j["sampling"];
    cfg.min_per_bin = s.value("min_per_bin", cfg.min_per_bin);
    cfg.extend_pairs = s.value("extend_pairs", cfg.extend_pairs);
    if (s.contains("bin_edges"))
      cfg.interference_bin_edges = s["bin_edges"].get<std::vector<double>>();
  }
  if (j.contains("stats")) {
    cfg.q = j["stats"].value("q", cfg.q);
    const std::string mode = j["stats"].value("after_mode", "phase_mean");
    cfg.after_mode = mode == "phase_last" ? AfterMode::PhaseLast : AfterMode::PhaseMean;
  }
  if (j.contains("phases")) {
    const auto& p = j["phases"];
    cfg.thresholds.rise = p.value("rise", cfg.thresholds.rise);
    cfg.thresholds.peak_fraction = p.value("peak_fraction", cfg.thresholds.peak_fraction);
    cfg.thresholds.band = p.value("band", cfg.thresholds.band);
    cfg.thresholds.drop = p.value("drop", cfg.thresholds.drop);
  }
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.master_seed = j.value("master_seed", cfg.master_seed);
  cfg.memory_cap = j.value("memory_cap", cfg.memory_cap);
  if (j.contains("stimuli_file"))
    cfg.stimuli_file = j["stimuli_file"].get<std::string>();

  // Environment carries hardware hints only.
  if (const char* cap = std::getenv("ASSOCLAB_MEMORY_CAP"))
    cfg.memory_cap = std::atoi(cap);
  return cfg;
}

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::Stimuli: return "stimuli";
    case Stage::Interference: return "interference";
    case Stage::Grid: return "grid";
    case Stage::Trials: return "trials";
    case Stage::Segment: return "segment";
    case Stage::Analyze: return "analyze";
    case Stage::Plots: return "plots";
  }
  return "unknown";
}

namespace {

struct RunContext {
  const ExperimentConfig& cfg;
  fs::path dir;
  std::shared_ptr<Backend> backend;
  int layer = 0;
  json manifest;

  std::string path(const std::string& name) const { return (dir / name).string(); }

  void save_manifest() const {
    std::ofstream out(path("manifest.json"));
    out << manifest.dump(2) << "\n";
  }
};

std::string to_cell(double v) { return TsvWriter::num(v); }

double cell_d(const TsvRow& row, const std::string& key) {
  return std::stod(row.at(key));
}
long cell_i(const TsvRow& row, const std::string& key) {
  return std::stol(row.at(key));
}

// ---- stage implementations -------------------------------------------------

std::vector<std::string> run_stimuli_stage(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto out_path = ctx.path("stimuli.tsv");
  TsvWriter out(out_path,
                {"backend_id", "layer", "group_index", "x", "x_text", "y", "y_text",
                 "before_sim", "seed", "iterations"});
  const auto& bid = ctx.backend->descriptor().model_id;
  const auto emit = [&](const StimulusSearchRecord& rec) {
    out.row({bid, std::to_string(ctx.layer),
             std::to_string(rec.pair.group_index.value_or(-1)),
             std::to_string(rec.pair.x), ctx.backend->token_text(rec.pair.x),
             std::to_string(rec.pair.y), ctx.backend->token_text(rec.pair.y),
             to_cell(rec.pair.before_sim), std::to_string(rec.seed),
             std::to_string(rec.iterations)});
  };

  if (cfg.stimuli_file) {
    for (const auto& row : read_tsv(*cfg.stimuli_file)) {
      TokenPair pair;
      pair.x = static_cast<TokenId>(cell_i(row, "x"));
      pair.y = static_cast<TokenId>(cell_i(row, "y"));
      pair.layer = ctx.layer;
      pair.before_sim =
          pair_similarity_before_learning(*ctx.backend, pair.x, pair.y, ctx.layer);
      pair.group_index = group_bin(pair.before_sim, cfg.groups);
      if (!pair.group_index) continue;  // outside every similarity window
      emit(StimulusSearchRecord{pair, 0, 0});
    }
  } else {
    const auto candidates = ctx.backend->filtered_vocabulary(cfg.filter);
    const auto set = build_stimulus_set(
        *ctx.backend, cfg.groups, cfg.pairs_per_group, ctx.layer, cfg.restarts,
        cfg.budget, candidates, Rng::derive(cfg.master_seed, "stimuli"));
    for (const auto& rec : set.pairs) emit(rec);
    json fills = json::array();
    for (const auto& f : set.fills)
      fills.push_back({{"group_index", f.group_index},
                       {"requested", f.requested},
                       {"achieved", f.achieved},
                       {"restarts_used", f.restarts_used}});
    ctx.manifest["stages"]["stimuli"]["fills"] = fills;
  }
  return {out_path};
}

std::vector<std::string> run_interference_stage(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto stimuli = read_tsv(ctx.path("stimuli.tsv"));
  const std::uint64_t subset_seed =
      cfg.subset_seed.value_or(Rng::derive(cfg.master_seed, "subset"));
  ctx.manifest["stages"]["interference"]["subset_seed"] = subset_seed;

  const auto filtered = ctx.backend->filtered_vocabulary(cfg.filter);
  const auto subset = sample_vocabulary_subset(filtered, cfg.subset_size, subset_seed);

  std::vector<double> scores;
  scores.reserve(stimuli.size());
  for (const auto& row : stimuli) {
    TokenPair pair;
    pair.x = static_cast<TokenId>(cell_i(row, "x"));
    pair.y = static_cast<TokenId>(cell_i(row, "y"));
    scores.push_back(interference_score(*ctx.backend, pair, subset, ctx.layer));
  }

  std::optional<InterferenceLevels> levels;
  if (scores.size() >= 3) levels = interference_levels(scores);

  const auto out_path = ctx.path("interference.tsv");
  {
    TsvWriter out(out_path, {"backend_id", "layer", "x", "y", "subset_seed", "score",
                             "level"});
    for (std::size_t i = 0; i < stimuli.size(); ++i) {
      out.row({ctx.backend->descriptor().model_id, std::to_string(ctx.layer),
               stimuli[i].at("x"), stimuli[i].at("y"), std::to_string(subset_seed),
               to_cell(scores[i]),
               levels ? interference_level_name(levels->labels[i]) : ""});
    }
  }
  const auto thr_path = ctx.path("interference_thresholds.tsv");
  {
    TsvWriter out(thr_path, {"q1", "q2", "degenerate"});
    if (levels)
      out.row({to_cell(levels->q1), to_cell(levels->q2),
               levels->degenerate ? "1" : "0"});
  }

  // Candidate pool over the subset: before-learning similarity and
  // interference for every ordered (x, t). States per x are shared across
  // both measures, so this costs |subset|^2 forwards.
  const auto pool_path = ctx.path("pool.tsv");
  {
    TsvWriter out(pool_path, {"x", "y", "before_sim", "interference"});
    if (cfg.extend_pairs) {
      for (TokenId x : subset.ids) {
        std::vector<std::vector<double>> states;
        states.reserve(subset.ids.size());
        std::vector<double> before;
        for (TokenId t : subset.ids) {
          const TokenSequence probe{{ctx.backend->bos_id(), x, t}, true};
          const auto fwd = ctx.backend->forward(probe, ctx.layer);
          before.push_back(
              cosine(fwd.hidden.at(1).vector, fwd.hidden.at(2).vector));
          states.push_back(fwd.hidden.at(2).vector);
        }
        const std::size_t n = states.size();
        std::vector<std::vector<double>> sim(n, std::vector<double>(n, 1.0));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = i + 1; k < n; ++k)
            sim[i][k] = sim[k][i] = cosine(states[i], states[k]);
        for (std::size_t i = 0; i < n; ++i) {
          std::vector<double> comp;
          comp.reserve(n - 1);
          for (std::size_t k = 0; k < n; ++k)
            if (k != i) comp.push_back(sim[i][k]);
          if (comp.empty()) continue;
          std::sort(comp.begin(), comp.end());
          const double med = comp.size() % 2 == 1
                                 ? comp[comp.size() / 2]
                                 : 0.5 * (comp[comp.size() / 2 - 1] +
                                          comp[comp.size() / 2]);
          out.row({std::to_string(x), std::to_string(subset.ids[i]),
                   to_cell(before[i]), to_cell(med)});
        }
      }
    }
  }
  return {out_path, thr_path, pool_path};
}

std::vector<std::string> run_grid_stage(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto stimuli = read_tsv(ctx.path("stimuli.tsv"));
  const auto interference = read_tsv(ctx.path("interference.tsv"));
  const auto pool_rows = read_tsv(ctx.path("pool.tsv"));

  std::map<std::pair<TokenId, TokenId>, double> p_scores;
  for (const auto& row : interference)
    p_scores[{static_cast<TokenId>(cell_i(row, "x")),
              static_cast<TokenId>(cell_i(row, "y"))}] = cell_d(row, "score");

  std::vector<ScoredPair> existing;
  for (const auto& row : stimuli) {
    ScoredPair sp;
    sp.pair.x = static_cast<TokenId>(cell_i(row, "x"));
    sp.pair.y = static_cast<TokenId>(cell_i(row, "y"));
    sp.pair.before_sim = cell_d(row, "before_sim");
    sp.pair.group_index = static_cast<int>(cell_i(row, "group_index"));
    sp.pair.layer = ctx.layer;
    sp.interference = p_scores.at({sp.pair.x, sp.pair.y});
    existing.push_back(sp);
  }

  std::vector<ScoredPair> pool;
  std::vector<double> pool_scores;
  for (const auto& row : pool_rows) {
    ScoredPair sp;
    sp.pair.x = static_cast<TokenId>(cell_i(row, "x"));
    sp.pair.y = static_cast<TokenId>(cell_i(row, "y"));
    sp.pair.before_sim = cell_d(row, "before_sim");
    sp.pair.layer = ctx.layer;
    sp.interference = cell_d(row, "interference");
    pool.push_back(sp);
    pool_scores.push_back(sp.interference);
  }

  std::vector<Interval> bins;
  if (cfg.interference_bin_edges) {
    const auto& e = *cfg.interference_bin_edges;
    if (e.size() < 2)
      throw Error(ErrorCode::InputError, "bin_edges needs at least 2 values");
    for (std::size_t i = 0; i + 1 < e.size(); ++i)
      bins.push_back(Interval{e[i], e[i + 1], i + 2 == e.size()});
  } else if (!pool_scores.empty()) {
    bins = decile_bins(pool_scores);
  } else {
    std::vector<double> ps;
    for (const auto& sp : existing) ps.push_back(sp.interference);
    bins = ps.empty() ? std::vector<Interval>{Interval{-1.0, 1.0, true}}
                      : decile_bins(ps);
  }

  JointSampleResult sample;
  if (cfg.extend_pairs) {
    SamplingGrid grid{cfg.groups, bins, cfg.min_per_bin};
    sample = joint_uniform_sample(grid, existing, pool,
                                  Rng::derive(cfg.master_seed, "grid"));
  }

  // Interference levels over the combined set Q.
  std::vector<double> q_scores;
  for (const auto& sp : existing) q_scores.push_back(sp.interference);
  for (const auto& sp : sample.sampled) q_scores.push_back(sp.interference);
  std::optional<InterferenceLevels> levels;
  if (q_scores.size() >= 3) levels = interference_levels(q_scores);

  const auto out_path = ctx.path("stimuli_extended.tsv");
  {
    TsvWriter out(out_path,
                  {"backend_id", "layer", "group_index", "x", "x_text", "y", "y_text",
                   "before_sim", "interference", "level", "source"});
    const auto& bid = ctx.backend->descriptor().model_id;
    std::size_t idx = 0;
    const auto emit = [&](const ScoredPair& sp, const char* source) {
      const auto group = sp.pair.group_index
                             ? sp.pair.group_index
                             : group_bin(sp.pair.before_sim, cfg.groups);
      out.row({bid, std::to_string(ctx.layer), std::to_string(group.value_or(-1)),
               std::to_string(sp.pair.x), ctx.backend->token_text(sp.pair.x),
               std::to_string(sp.pair.y), ctx.backend->token_text(sp.pair.y),
               to_cell(sp.pair.before_sim), to_cell(sp.interference),
               levels ? interference_level_name(levels->labels[idx]) : "", source});
      ++idx;
    };
    for (const auto& sp : existing) emit(sp, "search");
    for (const auto& sp : sample.sampled) emit(sp, "grid");
  }

  const auto fill_path = ctx.path("grid_fill.tsv");
  {
    TsvWriter out(fill_path, {"group_index", "bin_index", "bin_lo", "bin_hi",
                              "existing", "sampled", "available"});
    for (const auto& f : sample.fills)
      out.row({std::to_string(f.group_index), std::to_string(f.bin_index),
               to_cell(bins[f.bin_index].lo), to_cell(bins[f.bin_index].hi),
               std::to_string(f.existing), std::to_string(f.sampled),
               std::to_string(f.available)});
  }
  return {out_path, fill_path};
}

std::vector<std::string> run_trials_stage(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto extended = read_tsv(ctx.path("stimuli_extended.tsv"));
  RepetitionSchedule schedule{cfg.schedule};
  TraceCache cache;

  const auto out_path = ctx.path("traces.tsv");
  TsvWriter out(out_path, {"backend_id", "layer", "x", "y", "r", "predicted",
                           "correct", "pair_cosine", "delta_s"});
  for (const auto& row : extended) {
    TokenPair pair;
    pair.x = static_cast<TokenId>(cell_i(row, "x"));
    pair.y = static_cast<TokenId>(cell_i(row, "y"));
    pair.before_sim = cell_d(row, "before_sim");
    pair.layer = ctx.layer;
    const auto trace = run_trial(*ctx.backend, pair, schedule, ctx.layer, &cache);
    for (const auto& rec : trace.records)
      out.row({trace.backend_id, std::to_string(ctx.layer), std::to_string(pair.x),
               std::to_string(pair.y), std::to_string(rec.r),
               std::to_string(rec.predicted), rec.correct ? "1" : "0",
               to_cell(rec.pair_cosine), to_cell(rec.delta_s)});
  }
  return {out_path};
}

std::vector<RepetitionTrace> load_traces(const RunContext& ctx) {
  const auto rows = read_tsv(ctx.path("traces.tsv"));
  std::map<std::pair<TokenId, TokenId>, double> before;
  for (const auto& row : read_tsv(ctx.path("stimuli_extended.tsv")))
    before[{static_cast<TokenId>(cell_i(row, "x")),
            static_cast<TokenId>(cell_i(row, "y"))}] = cell_d(row, "before_sim");

  std::vector<RepetitionTrace> traces;
  std::map<std::pair<TokenId, TokenId>, std::size_t> index;
  for (const auto& row : rows) {
    const TokenId x = static_cast<TokenId>(cell_i(row, "x"));
    const TokenId y = static_cast<TokenId>(cell_i(row, "y"));
    auto it = index.find({x, y});
    if (it == index.end()) {
      RepetitionTrace t;
      t.backend_id = row.at("backend_id");
      t.layer = static_cast<int>(cell_i(row, "layer"));
      t.pair.x = x;
      t.pair.y = y;
      t.pair.layer = t.layer;
      t.pair.before_sim = before.count({x, y}) ? before.at({x, y}) : 0.0;
      it = index.emplace(std::make_pair(x, y), traces.size()).first;
      traces.push_back(std::move(t));
    }
    RepetitionRecord rec;
    rec.r = static_cast<int>(cell_i(row, "r"));
    rec.predicted = static_cast<TokenId>(cell_i(row, "predicted"));
    rec.correct = row.at("correct") == "1";
    rec.pair_cosine = cell_d(row, "pair_cosine");
    rec.delta_s = cell_d(row, "delta_s");
    traces[it->second].records.push_back(rec);
  }
  return traces;
}

std::vector<std::string> run_segment_stage(RunContext& ctx) {
  const auto traces = load_traces(ctx);
  const auto curve = accuracy_curve(traces);
  const auto seg = segment_phases(curve, ctx.cfg.thresholds);

  const auto seg_path = ctx.path("segmentation.tsv");
  {
    TsvWriter out(seg_path,
                  {"backend_id", "encoding_start", "encoding_end",
                   "consolidation_start", "consolidation_end", "forgetting_start",
                   "forgetting_end", "peak_accuracy", "rise", "peak_fraction",
                   "band", "drop"});
    out.row({ctx.backend->descriptor().model_id,
             std::to_string(seg.encoding.first_r), std::to_string(seg.encoding.last_r),
             std::to_string(seg.consolidation.first_r),
             std::to_string(seg.consolidation.last_r),
             seg.forgetting ? std::to_string(seg.forgetting->first_r) : "",
             seg.forgetting ? std::to_string(seg.forgetting->last_r) : "",
             to_cell(seg.peak_accuracy), to_cell(seg.thresholds.rise),
             to_cell(seg.thresholds.peak_fraction), to_cell(seg.thresholds.band),
             to_cell(seg.thresholds.drop)});
  }
  const auto acc_path = ctx.path("accuracy.tsv");
  {
    TsvWriter out(acc_path, {"r", "norm_coord", "mean_accuracy", "n"});
    for (const auto& pt : curve)
      out.row({std::to_string(pt.r), to_cell(normalize_repetitions(seg, pt.r)),
               to_cell(pt.mean_accuracy), std::to_string(pt.n)});
  }
  return {seg_path, acc_path};
}

PhaseSegmentation load_segmentation(const RunContext& ctx,
                                    const std::vector<int>& schedule) {
  const auto rows = read_tsv(ctx.path("segmentation.tsv"));
  if (rows.empty())
    throw Error(ErrorCode::MissingArtifact, "segmentation.tsv has no rows");
  const auto& row = rows.front();
  PhaseSegmentation seg;
  seg.schedule = schedule;
  seg.encoding = RepRange{static_cast<int>(cell_i(row, "encoding_start")),
                          static_cast<int>(cell_i(row, "encoding_end"))};
  seg.consolidation = RepRange{static_cast<int>(cell_i(row, "consolidation_start")),
                               static_cast<int>(cell_i(row, "consolidation_end"))};
  if (!row.at("forgetting_start").empty())
    seg.forgetting = RepRange{static_cast<int>(cell_i(row, "forgetting_start")),
                              static_cast<int>(cell_i(row, "forgetting_end"))};
  seg.peak_accuracy = cell_d(row, "peak_accuracy");
  seg.thresholds.rise = cell_d(row, "rise");
  seg.thresholds.peak_fraction = cell_d(row, "peak_fraction");
  seg.thresholds.band = cell_d(row, "band");
  seg.thresholds.drop = cell_d(row, "drop");
  return seg;
}

std::vector<std::string> run_analyze_stage(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto traces = load_traces(ctx);
  std::vector<int> schedule;
  if (!traces.empty())
    for (const auto& rec : traces.front().records) schedule.push_back(rec.r);
  const auto seg = load_segmentation(ctx, schedule);

  const auto stats =
      aggregate_group_phase(traces, seg, cfg.groups, {cfg.q, cfg.after_mode});

  const auto stats_path = ctx.path("stats.tsv");
  {
    TsvWriter out(stats_path,
                  {"group_index", "group_mid", "phase", "n", "n_pairs",
                   "mean_delta_s", "standard_error", "se_defined", "t", "p",
                   "tested", "degenerate", "rejected"});
    for (const auto& st : stats) {
      const auto& g = cfg.groups.at(st.group_index);
      out.row({std::to_string(st.group_index), to_cell(g.midpoint()),
               phase_name(st.phase), std::to_string(st.n),
               std::to_string(st.n_pairs), to_cell(st.mean_delta_s),
               to_cell(st.standard_error), st.se_defined ? "1" : "0",
               to_cell(st.t_statistic), to_cell(st.p_value), st.tested ? "1" : "0",
               st.degenerate ? "1" : "0", st.rejected ? "1" : "0"});
    }
  }

  // Per (group x interference level x phase) breakdown.
  std::map<std::pair<TokenId, TokenId>, std::string> levels;
  for (const auto& row : read_tsv(ctx.path("stimuli_extended.tsv")))
    levels[{static_cast<TokenId>(cell_i(row, "x")),
            static_cast<TokenId>(cell_i(row, "y"))}] = row.at("level");

  std::map<std::tuple<int, std::string, std::string>, std::vector<double>> cells;
  for (const auto& trace : traces) {
    const auto group = group_bin(trace.pair.before_sim, cfg.groups);
    if (!group) continue;
    const auto lv = levels.count({trace.pair.x, trace.pair.y})
                        ? levels.at({trace.pair.x, trace.pair.y})
                        : std::string();
    if (lv.empty()) continue;
    for (const auto& rec : trace.records)
      cells[{*group, lv, phase_name(seg.phase_of(rec.r))}].push_back(rec.delta_s);
  }
  const auto breakdown_path = ctx.path("breakdown.tsv");
  {
    TsvWriter out(breakdown_path, {"group_index", "group_mid", "level", "phase", "n",
                                   "mean_delta_s", "standard_error"});
    for (const auto& [key, values] : cells) {
      const auto& [group, level, phase] = key;
      const double mean =
          std::accumulate(values.begin(), values.end(), 0.0) / values.size();
      double se = 0.0;
      if (values.size() >= 2) {
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        se = std::sqrt(ss / (values.size() - 1)) / std::sqrt(values.size());
      }
      out.row({std::to_string(group), to_cell(cfg.groups.at(group).midpoint()),
               level, phase, std::to_string(values.size()), to_cell(mean),
               to_cell(se)});
    }
  }
  return {stats_path, breakdown_path};
}

std::vector<std::string> run_plots_stage(RunContext& ctx) {
  return export_plots(ctx.dir.string(),
                      {PlotKind::Accuracy, PlotKind::DeltaSByGroupPhase,
                       PlotKind::InterferenceBreakdown, PlotKind::HeatmapCounts,
                       PlotKind::InterferenceDistribution});
}

// ---- stage orchestration ---------------------------------------------------

struct StageSpec {
  Stage stage;
  std::vector<std::string> inputs;  // artifact names this stage consumes
  std::vector<std::string> (*run)(RunContext&);
};

const std::vector<StageSpec>& stage_specs() {
  static const std::vector<StageSpec> specs = {
      {Stage::Stimuli, {}, run_stimuli_stage},
      {Stage::Interference, {"stimuli.tsv"}, run_interference_stage},
      {Stage::Grid, {"stimuli.tsv", "interference.tsv", "pool.tsv"}, run_grid_stage},
      {Stage::Trials, {"stimuli_extended.tsv"}, run_trials_stage},
      {Stage::Segment, {"traces.tsv"}, run_segment_stage},
      {Stage::Analyze,
       {"traces.tsv", "segmentation.tsv", "stimuli_extended.tsv"},
       run_analyze_stage},
      {Stage::Plots,
       {"accuracy.tsv", "stats.tsv", "breakdown.tsv", "grid_fill.tsv",
        "interference.tsv", "interference_thresholds.tsv"},
       run_plots_stage},
  };
  return specs;
}

// Only the settings a stage actually reads participate in its fingerprint;
// upstream changes propagate through the input-file hashes. This is what lets
// an analysis-only tweak (say, q) leave the expensive trial stage untouched.
json stage_config_subset(const ExperimentConfig& cfg, Stage stage) {
  const json full = json::parse(cfg.snapshot_json());
  json sub;
  sub["backend"] = full["backend"];
  if (full.contains("layer")) sub["layer"] = full["layer"];
  sub["memory_cap"] = full["memory_cap"];
  switch (stage) {
    case Stage::Stimuli:
      for (const char* k : {"groups", "pairs_per_group", "restarts", "budget",
                            "filter", "master_seed"})
        sub[k] = full[k];
      if (full.contains("stimuli_file")) sub["stimuli_file"] = full["stimuli_file"];
      break;
    case Stage::Interference:
      for (const char* k : {"filter", "interference", "master_seed"}) sub[k] = full[k];
      sub["extend_pairs"] = full["sampling"]["extend_pairs"];
      break;
    case Stage::Grid:
      for (const char* k : {"groups", "sampling", "master_seed"}) sub[k] = full[k];
      break;
    case Stage::Trials:
      sub["schedule"] = full["schedule"];
      break;
    case Stage::Segment:
      sub["phases"] = full["phases"];
      break;
    case Stage::Analyze:
      sub["groups"] = full["groups"];
      sub["stats"] = full["stats"];
      break;
    case Stage::Plots:
      break;
  }
  return sub;
}

std::string stage_fingerprint(const RunContext& ctx, const StageSpec& spec) {
  std::string data = stage_config_subset(ctx.cfg, spec.stage).dump();
  data += "|stage=";
  data += stage_name(spec.stage);
  for (const auto& name : spec.inputs) {
    data += "|";
    data += name;
    data += "=";
    data += file_hash(ctx.path(name));
  }
  if (spec.stage == Stage::Stimuli && ctx.cfg.stimuli_file)
    data += "|stimuli_file=" + file_hash(*ctx.cfg.stimuli_file);
  return hex64(fnv1a(data));
}

bool stage_fresh(const RunContext& ctx, const StageSpec& spec,
                 const std::string& fingerprint) {
  const auto& stages = ctx.manifest["stages"];
  const std::string name = stage_name(spec.stage);
  if (!stages.contains(name)) return false;
  const auto& st = stages[name];
  if (st.value("status", "") != "complete") return false;
  if (st.value("fingerprint", "") != fingerprint) return false;
  if (!st.contains("outputs")) return false;
  for (const auto& [file, hash] : st["outputs"].items()) {
    if (!fs::exists(file)) return false;
    if (file_hash(file) != hash.get<std::string>()) return false;
  }
  return true;
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config, Stage up_to) {
  RunContext ctx{config, fs::path(config.output_dir), nullptr, 0, json::object()};
  fs::create_directories(ctx.dir);
  ctx.backend = make_backend(config.backend_uri);
  ctx.backend->set_memory_cap(config.memory_cap);
  ctx.layer = config.layer.value_or(ctx.backend->descriptor().layer_count);
  if (ctx.layer < 1 || ctx.layer > ctx.backend->descriptor().layer_count)
    throw Error(ErrorCode::RangeError, "configured layer outside backend range");

  // Start from any existing manifest so completed stages can be skipped.
  if (fs::exists(ctx.path("manifest.json"))) {
    std::ifstream in(ctx.path("manifest.json"));
    try {
      in >> ctx.manifest;
    } catch (...) {
      ctx.manifest = json::object();
    }
  }
  ctx.manifest["config"] = json::parse(config.snapshot_json());
  const auto& d = ctx.backend->descriptor();
  ctx.manifest["backend"] = {{"model_id", d.model_id},
                             {"vocab_size", d.vocab_size},
                             {"layer_count", d.layer_count},
                             {"max_context", d.max_context},
                             {"hidden_dim", d.hidden_dim},
                             {"has_bos", d.has_bos},
                             {"layer", ctx.layer}};
  if (!ctx.manifest.contains("stages")) ctx.manifest["stages"] = json::object();
  ctx.manifest["status"] = "running";
  ctx.manifest.erase("failed_stage");
  ctx.save_manifest();

  for (const auto& spec : stage_specs()) {
    const std::string name = stage_name(spec.stage);
    try {
      const auto fingerprint = stage_fingerprint(ctx, spec);
      if (!stage_fresh(ctx, spec, fingerprint)) {
        auto& st = ctx.manifest["stages"][name];
        st = json::object();
        st["status"] = "running";
        st["fingerprint"] = fingerprint;
        st["started"] = now_seconds();
        ctx.save_manifest();
        const auto outputs = spec.run(ctx);
        auto& entry = ctx.manifest["stages"][name];
        entry["outputs"] = json::object();
        for (const auto& file : outputs)
          entry["outputs"][file] = file_hash(file);
        entry["finished"] = now_seconds();
        entry["status"] = "complete";
        ctx.save_manifest();
      }
    } catch (const std::exception& e) {
      ctx.manifest["stages"][name]["status"] = "failed";
      ctx.manifest["stages"][name]["error"] = e.what();
      ctx.manifest["status"] = "failed";
      ctx.manifest["failed_stage"] = name;
      ctx.save_manifest();
      throw;
    }
    if (spec.stage == up_to) break;
  }

  ctx.manifest["status"] = up_to == Stage::Plots ? "complete" : "partial";
  ctx.save_manifest();
  return RunManifest{ctx.path("manifest.json"), ctx.manifest.dump(2)};
}

std::vector<std::string> export_plots(const std::string& results_dir,
                                      const std::set<PlotKind>& kinds) {
  const fs::path dir(results_dir);
  std::vector<std::string> written;
  const auto need = [&](const std::string& name) {
    const auto p = (dir / name).string();
    if (!fs::exists(p))
      throw Error(ErrorCode::MissingArtifact, "required export missing: " + p);
    return p;
  };
  const auto copy_table = [&](const std::string& src, const std::string& dst) {
    fs::copy_file(src, (dir / dst).string(), fs::copy_options::overwrite_existing);
    written.push_back((dir / dst).string());
  };

  if (kinds.count(PlotKind::Accuracy)) {
    const auto rows = read_tsv(need("accuracy.tsv"));
    svg::Series s{"mean accuracy", "steelblue", {}};
    for (const auto& row : rows)
      s.points.push_back({cell_d(row, "norm_coord"), cell_d(row, "mean_accuracy"),
                          0.0, false});
    const auto out = (dir / "accuracy.svg").string();
    svg::write_line_chart(out, "Accuracy across learning phases",
                          "normalized phase coordinate", "accuracy", {s});
    written.push_back(out);
    copy_table(need("accuracy.tsv"), "accuracy_plotdata.tsv");
  }

  if (kinds.count(PlotKind::DeltaSByGroupPhase)) {
    const auto rows = read_tsv(need("stats.tsv"));
    std::map<std::string, svg::Series> by_phase;
    by_phase["Encoding"] = {"Encoding", "steelblue", {}};
    by_phase["Consolidation"] = {"Consolidation", "firebrick", {}};
    by_phase["Forgetting"] = {"Forgetting", "seagreen", {}};
    for (const auto& row : rows) {
      if (cell_i(row, "n") == 0) continue;
      by_phase[row.at("phase")].points.push_back(
          {cell_d(row, "group_mid"), cell_d(row, "mean_delta_s"),
           cell_d(row, "standard_error"), row.at("rejected") == "1"});
    }
    std::vector<svg::Series> series;
    for (auto& [name, s] : by_phase)
      if (!s.points.empty()) series.push_back(s);
    const auto out = (dir / "delta_s_by_group_phase.svg").string();
    svg::write_line_chart(out, "Representational change by similarity group",
                          "pair similarity before learning (group midpoint)",
                          "mean delta S", series);
    written.push_back(out);
    copy_table(need("stats.tsv"), "delta_s_by_group_phase_plotdata.tsv");
  }

  if (kinds.count(PlotKind::InterferenceBreakdown)) {
    const auto rows = read_tsv(need("breakdown.tsv"));
    std::map<std::string, svg::Series> by_level;
    by_level["Low"] = {"Low", "goldenrod", {}};
    by_level["Mid"] = {"Mid", "darkorange", {}};
    by_level["High"] = {"High", "firebrick", {}};
    for (const auto& row : rows) {
      if (row.at("phase") != "Consolidation") continue;
      by_level[row.at("level")].points.push_back(
          {cell_d(row, "group_mid"), cell_d(row, "mean_delta_s"),
           cell_d(row, "standard_error"), false});
    }
    std::vector<svg::Series> series;
    for (auto& [name, s] : by_level)
      if (!s.points.empty()) series.push_back(s);
    const auto out = (dir / "interference_breakdown.svg").string();
    svg::write_line_chart(out,
                          "Consolidation-phase change by interference level",
                          "pair similarity before learning (group midpoint)",
                          "mean delta S", series);
    written.push_back(out);
    copy_table(need("breakdown.tsv"), "interference_breakdown_plotdata.tsv");
  }

  if (kinds.count(PlotKind::HeatmapCounts)) {
    const auto rows = read_tsv(need("grid_fill.tsv"));
    std::vector<svg::HeatCell> cells;
    int cols = 1, rws = 1;
    for (const auto& row : rows) {
      svg::HeatCell c;
      c.col = static_cast<int>(cell_i(row, "group_index"));
      c.row = static_cast<int>(cell_i(row, "bin_index"));
      c.value = std::log1p(static_cast<double>(cell_i(row, "existing") +
                                               cell_i(row, "sampled")));
      cols = std::max(cols, c.col + 1);
      rws = std::max(rws, c.row + 1);
      cells.push_back(c);
    }
    const auto out = (dir / "heatmap_counts.svg").string();
    svg::write_heatmap(out, "Pair counts (log scale)", "similarity group",
                       "interference bin", cols, rws, cells);
    written.push_back(out);
    copy_table(need("grid_fill.tsv"), "heatmap_counts_plotdata.tsv");
  }

  if (kinds.count(PlotKind::InterferenceDistribution)) {
    const auto rows = read_tsv(need("interference.tsv"));
    std::vector<double> scores;
    for (const auto& row : rows) scores.push_back(cell_d(row, "score"));
    std::vector<double> vlines;
    const auto thr = read_tsv(need("interference_thresholds.tsv"));
    if (!thr.empty()) {
      vlines.push_back(cell_d(thr.front(), "q1"));
      vlines.push_back(cell_d(thr.front(), "q2"));
    }
    const auto out = (dir / "interference_distribution.svg").string();
    if (!scores.empty())
      svg::write_histogram(out, "Vocabulary interference distribution",
                           "interference score", scores, 20, vlines);
    written.push_back(out);
    copy_table(need("interference.tsv"), "interference_distribution_plotdata.tsv");
  }

  return written;
}

VerifyReport verify_run(const ExperimentConfig& config) {
  VerifyReport report;
  RunContext ctx{config, fs::path(config.output_dir), nullptr, 0, json::object()};
  ctx.backend = make_backend(config.backend_uri);
  ctx.backend->set_memory_cap(config.memory_cap);
  ctx.layer = config.layer.value_or(ctx.backend->descriptor().layer_count);
  const auto fail = [&](const std::string& msg) {
    ++report.discrepancies;
    report.messages.push_back(msg);
  };

  // before_sim and group membership of every emitted pair.
  for (const auto& row : read_tsv(ctx.path("stimuli_extended.tsv"))) {
    ++report.checks;
    const TokenId x = static_cast<TokenId>(cell_i(row, "x"));
    const TokenId y = static_cast<TokenId>(cell_i(row, "y"));
    const double recorded = cell_d(row, "before_sim");
    const double actual =
        pair_similarity_before_learning(*ctx.backend, x, y, ctx.layer);
    if (std::abs(recorded - actual) > 1e-9)
      fail("before_sim mismatch for (" + std::to_string(x) + "," +
           std::to_string(y) + ")");
    const int group = static_cast<int>(cell_i(row, "group_index"));
    if (group >= 0 && !config.groups.at(group).contains(actual))
      fail("pair (" + std::to_string(x) + "," + std::to_string(y) +
           ") outside its group interval");
  }

  // delta_s identity at r = 1 and consistency with the recomputed baseline.
  for (const auto& row : read_tsv(ctx.path("traces.tsv"))) {
    ++report.checks;
    const int r = static_cast<int>(cell_i(row, "r"));
    const double delta = cell_d(row, "delta_s");
    if (r == 1 && std::abs(delta) > 1e-12) {
      fail("delta_s at r=1 is nonzero for (" + row.at("x") + "," + row.at("y") + ")");
      continue;
    }
    const TokenId x = static_cast<TokenId>(cell_i(row, "x"));
    const TokenId y = static_cast<TokenId>(cell_i(row, "y"));
    const double baseline =
        pair_similarity_before_learning(*ctx.backend, x, y, ctx.layer);
    if (std::abs(cell_d(row, "pair_cosine") - baseline - delta) > 1e-9)
      fail("delta_s inconsistent with recomputed baseline for (" + row.at("x") +
           "," + row.at("y") + ") at r=" + row.at("r"));
  }

  // BY rejections from recorded p-values.
  {
    const auto rows = read_tsv(ctx.path("stats.tsv"));
    std::vector<double> p;
    std::vector<bool> recorded;
    for (const auto& row : rows) {
      if (row.at("tested") != "1") continue;
      p.push_back(cell_d(row, "p"));
      recorded.push_back(row.at("rejected") == "1");
    }
    const auto flags = by_correction(p, config.q);
    for (std::size_t i = 0; i < flags.size(); ++i) {
      ++report.checks;
      if (flags[i] != recorded[i]) fail("BY rejection flag mismatch");
    }
  }
  return report;
}

}  // namespace assoclab
