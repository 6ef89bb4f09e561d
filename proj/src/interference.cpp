#include "assoclab/interference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "assoclab/rng.hpp"

namespace assoclab {

const char* interference_level_name(InterferenceLevel level) {
  switch (level) {
    case InterferenceLevel::Low: return "Low";
    case InterferenceLevel::Mid: return "Mid";
    case InterferenceLevel::High: return "High";
  }
  return "unknown";
}

VocabularySubset sample_vocabulary_subset(const std::set<TokenId>& filtered,
                                          int size, std::uint64_t seed) {
  if (size < 1) throw Error(ErrorCode::InputError, "subset size must be positive");
  std::vector<TokenId> pool(filtered.begin(), filtered.end());
  Rng rng(Rng::derive(seed, "vocab-subset"));
  auto picked = rng.sample(std::move(pool), static_cast<std::size_t>(size));
  std::sort(picked.begin(), picked.end());
  return VocabularySubset{std::move(picked), seed, size};
}

double interference_score(const Backend& backend, const TokenPair& pair,
                          const VocabularySubset& subset, int layer) {
  // h_y1: state of y in [BOS, x, y]; competitors h_t1 from [BOS, x, t].
  const TokenSequence pair_seq{{backend.bos_id(), pair.x, pair.y}, true};
  const auto h_y = backend.forward(pair_seq, layer).hidden.at(2).vector;

  std::vector<double> sims;
  sims.reserve(subset.ids.size());
  for (TokenId t : subset.ids) {
    if (t == pair.y) continue;  // y never competes with itself
    const TokenSequence probe{{backend.bos_id(), pair.x, t}, true};
    const auto h_t = backend.forward(probe, layer).hidden.at(2).vector;
    sims.push_back(cosine(h_y, h_t));
  }
  if (sims.empty())
    throw Error(ErrorCode::InsufficientCompetitors,
                "no competitors left after excluding y");
  std::sort(sims.begin(), sims.end());
  const std::size_t n = sims.size();
  if (n % 2 == 1) return sims[n / 2];
  return 0.5 * (sims[n / 2 - 1] + sims[n / 2]);
}

namespace {

double quantile_type7(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  const double pos = p * (n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= n) return sorted.back();
  const double frac = pos - lo;
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace

InterferenceLevels interference_levels(const std::vector<double>& scores) {
  if (scores.size() < 3)
    throw Error(ErrorCode::InsufficientData, "need at least 3 scores for tertiles");
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());

  InterferenceLevels out;
  out.q1 = quantile_type7(sorted, 1.0 / 3.0);
  out.q2 = quantile_type7(sorted, 2.0 / 3.0);
  out.degenerate = sorted.front() == sorted.back();
  out.labels.reserve(scores.size());
  for (double s : scores) {
    if (out.degenerate || s < out.q1)
      out.labels.push_back(InterferenceLevel::Low);
    else if (s < out.q2)
      out.labels.push_back(InterferenceLevel::Mid);
    else
      out.labels.push_back(InterferenceLevel::High);
  }
  return out;
}

std::vector<Interval> decile_bins(const std::vector<double>& scores) {
  if (scores.empty())
    throw Error(ErrorCode::InsufficientData, "no scores for decile bins");
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  std::vector<Interval> bins;
  for (int i = 0; i < 10; ++i) {
    Interval b;
    b.lo = quantile_type7(sorted, i / 10.0);
    b.hi = quantile_type7(sorted, (i + 1) / 10.0);
    b.closed_hi = (i == 9);
    if (b.hi > b.lo || (b.closed_hi && b.hi >= b.lo)) bins.push_back(b);
  }
  return bins;
}

JointSampleResult joint_uniform_sample(const SamplingGrid& grid,
                                       const std::vector<ScoredPair>& existing,
                                       const std::vector<ScoredPair>& pool,
                                       std::uint64_t seed) {
  if (grid.min_per_bin < 1)
    throw Error(ErrorCode::InputError, "min_per_bin must be positive");

  const auto cell_of = [&](const ScoredPair& sp) -> std::optional<std::pair<int, int>> {
    int g = -1, b = -1;
    for (std::size_t i = 0; i < grid.similarity_groups.size(); ++i)
      if (grid.similarity_groups[i].contains(sp.pair.before_sim)) {
        g = static_cast<int>(i);
        break;
      }
    for (std::size_t i = 0; i < grid.interference_bins.size(); ++i)
      if (grid.interference_bins[i].contains(sp.interference)) {
        b = static_cast<int>(i);
        break;
      }
    if (g < 0 || b < 0) return std::nullopt;
    return std::make_pair(g, b);
  };

  std::set<std::pair<TokenId, TokenId>> taken;  // ordered (x, y)
  std::map<std::pair<int, int>, int> existing_count;
  for (const auto& sp : existing) {
    taken.insert({sp.pair.x, sp.pair.y});
    if (auto cell = cell_of(sp)) existing_count[*cell] += 1;
  }

  std::map<std::pair<int, int>, std::vector<ScoredPair>> by_cell;
  for (const auto& sp : pool) {
    if (taken.count({sp.pair.x, sp.pair.y})) continue;
    if (auto cell = cell_of(sp)) by_cell[*cell].push_back(sp);
  }

  JointSampleResult result;
  Rng rng(Rng::derive(seed, "joint-sample"));
  for (std::size_t g = 0; g < grid.similarity_groups.size(); ++g) {
    for (std::size_t b = 0; b < grid.interference_bins.size(); ++b) {
      const std::pair<int, int> cell{static_cast<int>(g), static_cast<int>(b)};
      CellFill fill;
      fill.group_index = grid.similarity_groups[g].index;
      fill.bin_index = static_cast<int>(b);
      fill.existing = existing_count.count(cell) ? existing_count[cell] : 0;

      auto& cands = by_cell[cell];
      // Stable candidate order before the seeded shuffle keeps draws
      // independent of pool iteration order.
      std::sort(cands.begin(), cands.end(),
                [](const ScoredPair& a, const ScoredPair& c) {
                  if (a.pair.x != c.pair.x) return a.pair.x < c.pair.x;
                  return a.pair.y < c.pair.y;
                });
      cands.erase(std::unique(cands.begin(), cands.end(),
                              [](const ScoredPair& a, const ScoredPair& c) {
                                return a.pair.x == c.pair.x && a.pair.y == c.pair.y;
                              }),
                  cands.end());
      fill.available = static_cast<int>(cands.size());

      const int need = std::max(0, grid.min_per_bin - fill.existing);
      const auto picked = rng.sample(cands, static_cast<std::size_t>(need));
      for (const auto& sp : picked) {
        if (!taken.insert({sp.pair.x, sp.pair.y}).second) continue;
        result.sampled.push_back(sp);
        ++fill.sampled;
      }
      result.fills.push_back(fill);
    }
  }
  return result;
}

}  // namespace assoclab
