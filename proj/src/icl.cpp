#include "assoclab/icl.hpp"

#include <algorithm>

namespace assoclab {

void RepetitionSchedule::validate(const Backend& backend) const {
  int prev = 0;
  for (int r : repetition_counts) {
    if (r <= prev)
      throw Error(ErrorCode::InputError,
                  "repetition counts must be strictly increasing positives");
    prev = r;
    if (2 * r - 1 + 1 > backend.effective_context())
      throw Error(ErrorCode::ContextOverflow,
                  "repetition count " + std::to_string(r) +
                      " exceeds effective context");
  }
}

TokenSequence build_sequence(const Backend& backend, const TokenPair& pair, int r) {
  if (r < 1) throw Error(ErrorCode::RangeError, "r must be positive");
  const int body = 2 * r - 1;
  if (body + 1 > backend.effective_context())
    throw Error(ErrorCode::ContextOverflow,
                "sequence for r=" + std::to_string(r) + " exceeds effective context");
  TokenSequence seq;
  seq.bos_included = true;
  seq.ids.reserve(body + 1);
  seq.ids.push_back(backend.bos_id());
  for (int i = 0; i < body; ++i)
    seq.ids.push_back(i % 2 == 0 ? pair.x : pair.y);
  return seq;
}

bool TraceCache::get(const std::string& backend_id, int layer, TokenId x, TokenId y,
                     int r, RepetitionRecord& out) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find({backend_id, layer, x, y, r});
  if (it == entries_.end()) return false;
  out = it->second;
  return true;
}

void TraceCache::put(const std::string& backend_id, int layer, TokenId x, TokenId y,
                     int r, const RepetitionRecord& rec) {
  std::lock_guard<std::mutex> lock(mutex_);
  entries_[{backend_id, layer, x, y, r}] = rec;
}

namespace {

RepetitionRecord measure(const Backend& backend, const TokenPair& pair, int r,
                         int layer) {
  const auto seq = build_sequence(backend, pair, r);
  const auto out = backend.forward(seq, layer);

  RepetitionRecord rec;
  rec.r = r;
  rec.predicted = static_cast<TokenId>(
      std::max_element(out.logits.begin(), out.logits.end()) - out.logits.begin());
  rec.correct = rec.predicted == pair.y;

  if (r == 1) {
    rec.pair_cosine = pair_similarity_before_learning(backend, pair.x, pair.y, layer);
  } else {
    // Last occurrences: x_r at body position 2r-2, y_{r-1} at 2r-3 (+1 for BOS).
    rec.pair_cosine =
        cosine(out.hidden.at(2 * r - 1).vector, out.hidden.at(2 * r - 2).vector);
  }
  return rec;
}

}  // namespace

RepetitionTrace run_trial(const Backend& backend, const TokenPair& pair,
                          const RepetitionSchedule& schedule, int layer,
                          TraceCache* cache) {
  schedule.validate(backend);
  RepetitionTrace trace;
  trace.backend_id = backend.descriptor().model_id;
  trace.pair = pair;
  trace.layer = layer;
  if (schedule.repetition_counts.empty()) return trace;

  const std::string& bid = backend.descriptor().model_id;
  const auto measured = [&](int r) {
    RepetitionRecord rec;
    if (cache && cache->get(bid, layer, pair.x, pair.y, r, rec)) return rec;
    rec = measure(backend, pair, r, layer);
    if (cache) cache->put(bid, layer, pair.x, pair.y, r, rec);
    return rec;
  };

  // Baseline cosine comes from r = 1 whether or not it is on the schedule.
  const double baseline = measured(1).pair_cosine;
  for (int r : schedule.repetition_counts) {
    RepetitionRecord rec = measured(r);
    rec.delta_s = rec.pair_cosine - baseline;
    trace.records.push_back(rec);
  }
  return trace;
}

std::vector<AccuracyPoint> accuracy_curve(const std::vector<RepetitionTrace>& traces) {
  if (traces.empty()) return {};
  std::vector<int> schedule;
  for (const auto& rec : traces.front().records) schedule.push_back(rec.r);
  std::vector<AccuracyPoint> curve;
  for (int r : schedule) curve.push_back(AccuracyPoint{r, 0.0, 0});

  for (const auto& trace : traces) {
    if (trace.records.size() != schedule.size())
      throw Error(ErrorCode::AggregationError, "traces have mismatched schedules");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
      if (trace.records[i].r != schedule[i])
        throw Error(ErrorCode::AggregationError, "traces have mismatched schedules");
      curve[i].mean_accuracy += trace.records[i].correct ? 1.0 : 0.0;
      curve[i].n += 1;
    }
  }
  for (auto& pt : curve) pt.mean_accuracy /= pt.n;
  return curve;
}

}  // namespace assoclab
