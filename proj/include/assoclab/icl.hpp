#pragma once

#include <map>
#include <mutex>
#include <tuple>
#include <vector>

#include "assoclab/backend.hpp"
#include "assoclab/search.hpp"

namespace assoclab {

struct RepetitionSchedule {
  std::vector<int> repetition_counts;  // strictly increasing, positive

  void validate(const Backend& backend) const;
};

struct RepetitionRecord {
  int r = 0;
  TokenId predicted = 0;
  bool correct = false;
  double pair_cosine = 0.0;
  double delta_s = 0.0;
};

struct RepetitionTrace {
  std::string backend_id;
  TokenPair pair;
  int layer = 0;
  std::vector<RepetitionRecord> records;
};

// [BOS, x, y, x, y, ..., x]: r occurrences of x, r-1 of y, body length 2r-1.
TokenSequence build_sequence(const Backend& backend, const TokenPair& pair, int r);

// Memoizes per-repetition measurements keyed on (backend id, layer, x, y, r).
// Concurrent readers, serialized writers.
class TraceCache {
 public:
  bool get(const std::string& backend_id, int layer, TokenId x, TokenId y, int r,
           RepetitionRecord& out) const;
  void put(const std::string& backend_id, int layer, TokenId x, TokenId y, int r,
           const RepetitionRecord& rec);

 private:
  using Key = std::tuple<std::string, int, TokenId, TokenId, int>;
  mutable std::mutex mutex_;
  std::map<Key, RepetitionRecord> entries_;
};

RepetitionTrace run_trial(const Backend& backend, const TokenPair& pair,
                          const RepetitionSchedule& schedule, int layer,
                          TraceCache* cache = nullptr);

struct AccuracyPoint {
  int r = 0;
  double mean_accuracy = 0.0;
  int n = 0;
};

std::vector<AccuracyPoint> accuracy_curve(const std::vector<RepetitionTrace>& traces);

}  // namespace assoclab
