#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "assoclab/backend.hpp"
#include "assoclab/search.hpp"

namespace assoclab {

struct VocabularySubset {
  std::vector<TokenId> ids;  // sorted
  std::uint64_t seed = 0;
  int size = 1000;
};

// min(size, |filtered vocabulary|) tokens sampled without replacement.
VocabularySubset sample_vocabulary_subset(const std::set<TokenId>& filtered,
                                          int size, std::uint64_t seed);

enum class InterferenceLevel { Low, Mid, High };
const char* interference_level_name(InterferenceLevel level);

// Median of cos(h_y1, h_t1) over t in subset \ {y}, with h_t1 the state of t
// in [BOS, x, t]. Even-size median = mean of the two central values.
double interference_score(const Backend& backend, const TokenPair& pair,
                          const VocabularySubset& subset, int layer);

struct InterferenceLevels {
  double q1 = 0.0;  // 1/3 empirical quantile
  double q2 = 0.0;  // 2/3 empirical quantile
  std::vector<InterferenceLevel> labels;  // one per input score
  bool degenerate = false;                // all scores equal
};

// Tertile thresholds via linear interpolation between closest ranks
// (the "type 7" rule: q(p) = sorted[(n-1)p] interpolated). Labels use
// half-open binning [min, q1) / [q1, q2) / [q2, max].
InterferenceLevels interference_levels(const std::vector<double>& scores);

struct ScoredPair {
  TokenPair pair;            // carries before_sim
  double interference = 0.0;
};

struct Interval {
  double lo = 0.0;
  double hi = 0.0;      // half-open [lo, hi) unless closed_hi
  bool closed_hi = false;

  bool contains(double v) const {
    return v >= lo && (closed_hi ? v <= hi : v < hi);
  }
};

// Decile edges of the observed score distribution; the last bin is closed.
std::vector<Interval> decile_bins(const std::vector<double>& scores);

struct SamplingGrid {
  std::vector<SimilarityGroup> similarity_groups;
  std::vector<Interval> interference_bins;
  int min_per_bin = 10;
};

struct CellFill {
  int group_index = 0;
  int bin_index = 0;
  int existing = 0;   // pairs from P already in the cell
  int sampled = 0;
  int available = 0;  // distinct pool pairs in the cell, excluding P
};

struct JointSampleResult {
  std::vector<ScoredPair> sampled;  // new pairs only; Q = P + sampled
  std::vector<CellFill> fills;
};

// Fills each (similarity group x interference bin) cell up to min_per_bin,
// counting pairs already in P and drawing the remainder without replacement
// from the pool. Never emits a duplicate of P or of another draw.
JointSampleResult joint_uniform_sample(const SamplingGrid& grid,
                                       const std::vector<ScoredPair>& existing,
                                       const std::vector<ScoredPair>& pool,
                                       std::uint64_t seed);

}  // namespace assoclab
