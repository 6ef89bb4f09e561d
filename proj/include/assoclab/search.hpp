#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "assoclab/backend.hpp"

namespace assoclab {

struct SimilarityGroup {
  int index = 0;
  double theta_min = 0.0;
  double theta_max = 0.0;  // half-open: [theta_min, theta_max)

  bool contains(double s) const { return s >= theta_min && s < theta_max; }
  double midpoint() const { return 0.5 * (theta_min + theta_max); }
};

// 17 windows of width 0.05 covering [0.1, 0.95).
std::vector<SimilarityGroup> default_similarity_groups();

struct TokenPair {
  TokenId x = 0;
  TokenId y = 0;
  double before_sim = 0.0;
  std::optional<int> group_index;
  int layer = 0;
  std::optional<double> interference;
};

struct SearchBudget {
  int top_k = 256;
  int max_iterations = 100;
  double armijo_alpha = 0.3;
  double shrink_beta = 0.2;
  double gradient_bound_floor = 1e-8;
  bool use_backtracking = false;
};

struct GcgResult {
  bool success = false;
  TokenPair pair;       // in-interval pair on success, best-found otherwise
  double best_loss = 0.0;
  int iterations = 0;
  std::uint64_t seed = 0;
};

// cos(h_x1, h_y1): x's state in [BOS, x], y's state in [BOS, x, y].
double pair_similarity_before_learning(const Backend& backend, TokenId x, TokenId y,
                                       int layer);

GcgResult gcg_search(const Backend& backend, TokenId x_init, const SimilarityGroup& group,
                     const SearchBudget& budget, int layer,
                     const std::set<TokenId>& candidates, std::uint64_t seed);

// Exhaustive oracle: all in-interval (x, y) with y in candidates, sorted by
// |before_sim - midpoint| ascending, ties by smaller y.
std::vector<TokenPair> brute_force_search(const Backend& backend,
                                          const SimilarityGroup& group, TokenId x,
                                          const std::set<TokenId>& candidates,
                                          int layer);

struct GroupFillReport {
  int group_index = 0;
  int requested = 0;
  int achieved = 0;
  int restarts_used = 0;
};

struct StimulusSearchRecord {
  TokenPair pair;
  std::uint64_t seed = 0;
  int iterations = 0;
};

struct StimulusSet {
  std::vector<StimulusSearchRecord> pairs;
  std::vector<GroupFillReport> fills;
};

StimulusSet build_stimulus_set(const Backend& backend,
                               const std::vector<SimilarityGroup>& groups,
                               int pairs_per_group, int layer, int restarts,
                               const SearchBudget& budget,
                               const std::set<TokenId>& candidates,
                               std::uint64_t seed);

}  // namespace assoclab
