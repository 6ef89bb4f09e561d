#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "assoclab/interference.hpp"
#include "assoclab/rng.hpp"
#include "assoclab/synthetic_backend.hpp"

using namespace assoclab;

TEST_CASE("vocabulary subset is a sorted seeded draw from the filtered set") {
  std::set<TokenId> filtered;
  for (TokenId id = 1; id < 80; ++id) filtered.insert(id);

  const auto a = sample_vocabulary_subset(filtered, 20, 7);
  const auto b = sample_vocabulary_subset(filtered, 20, 7);
  const auto c = sample_vocabulary_subset(filtered, 20, 8);
  CHECK(a.ids == b.ids);
  CHECK(a.ids != c.ids);
  CHECK(a.ids.size() == 20);
  CHECK(std::is_sorted(a.ids.begin(), a.ids.end()));
  CHECK(std::set<TokenId>(a.ids.begin(), a.ids.end()).size() == 20);
  for (TokenId id : a.ids) CHECK(filtered.count(id) == 1);

  // Requesting more than available clamps to the whole set.
  CHECK(sample_vocabulary_subset(filtered, 500, 1).ids.size() == 79);
  CHECK_THROWS_AS(sample_vocabulary_subset(filtered, 0, 1), Error);
}

TEST_CASE("interference_score equals the exhaustively tabulated median") {
  SyntheticBackend backend(44, 40, 6, 2);
  const int layer = 2;
  const TokenPair pair{5, 9, 0.0, std::nullopt, layer, std::nullopt};

  for (int size : {7, 8}) {  // odd and even competitor counts (y excluded)
    std::set<TokenId> filtered;
    for (TokenId id = 1; id <= 20; ++id) filtered.insert(id);
    const auto subset = sample_vocabulary_subset(filtered, size, 3);

    const auto h_y =
        backend.forward(TokenSequence{{0, pair.x, pair.y}, true}, layer)
            .hidden.at(2).vector;
    std::vector<double> sims;
    for (TokenId t : subset.ids) {
      if (t == pair.y) continue;
      const auto h_t = backend.forward(TokenSequence{{0, pair.x, t}, true}, layer)
                           .hidden.at(2).vector;
      sims.push_back(cosine(h_y, h_t));
    }
    std::sort(sims.begin(), sims.end());
    const std::size_t n = sims.size();
    const double expect = n % 2 == 1 ? sims[n / 2]
                                     : 0.5 * (sims[n / 2 - 1] + sims[n / 2]);
    CHECK(interference_score(backend, pair, subset, layer) == expect);
  }
}

TEST_CASE("interference_score excludes y and needs competitors") {
  SyntheticBackend backend(44, 40, 6, 2);
  const TokenPair pair{5, 9, 0.0, std::nullopt, 2, std::nullopt};
  VocabularySubset only_y{{9}, 0, 1};
  try {
    interference_score(backend, pair, only_y, 2);
    FAIL("expected insufficient competitors");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InsufficientCompetitors);
  }
}

TEST_CASE("tertile thresholds match the reference quantile values") {
  const std::vector<double> scores{0.12, 0.50, 0.31, 0.77, 0.05,
                                   0.64, 0.42, 0.93, 0.28};
  const auto levels = interference_levels(scores);
  CHECK(levels.q1 == doctest::Approx(0.29999999999999999).epsilon(1e-12));
  CHECK(levels.q2 == doctest::Approx(0.54666666666666663).epsilon(1e-12));
  CHECK(!levels.degenerate);

  REQUIRE(levels.labels.size() == scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const auto expect = scores[i] < levels.q1   ? InterferenceLevel::Low
                        : scores[i] < levels.q2 ? InterferenceLevel::Mid
                                                : InterferenceLevel::High;
    CHECK(levels.labels[i] == expect);
  }
  CHECK(std::string(interference_level_name(levels.labels[2])) == "Mid");  // 0.31
}

TEST_CASE("degenerate score sets label everything Low") {
  const auto levels = interference_levels({0.4, 0.4, 0.4, 0.4});
  CHECK(levels.degenerate);
  for (auto l : levels.labels) CHECK(l == InterferenceLevel::Low);
  CHECK_THROWS_AS(interference_levels({0.1, 0.2}), Error);
}

TEST_CASE("decile bins cover the observed range with a closed last bin") {
  Rng rng(12);
  std::vector<double> scores;
  for (int i = 0; i < 200; ++i) scores.push_back(rng.uniform01());
  const auto bins = decile_bins(scores);
  REQUIRE(bins.size() == 10);
  const double lo = *std::min_element(scores.begin(), scores.end());
  const double hi = *std::max_element(scores.begin(), scores.end());
  CHECK(bins.front().lo == doctest::Approx(lo));
  CHECK(bins.back().hi == doctest::Approx(hi));
  CHECK(bins.back().closed_hi);
  for (std::size_t i = 1; i < bins.size(); ++i) CHECK(bins[i].lo == bins[i - 1].hi);
  // Every score lands in exactly one bin.
  for (double s : scores) {
    int hits = 0;
    for (const auto& b : bins) hits += b.contains(s) ? 1 : 0;
    CHECK(hits == 1);
  }
}

TEST_CASE("joint_uniform_sample fills cells without duplicates, deterministically") {
  Rng rng(505);
  for (int config = 0; config < 50; ++config) {
    SamplingGrid grid;
    const int n_groups = 2 + static_cast<int>(rng.uniform_below(4));
    for (int g = 0; g < n_groups; ++g)
      grid.similarity_groups.push_back(
          SimilarityGroup{g, 0.1 + 0.2 * g, 0.1 + 0.2 * (g + 1)});
    const int n_bins = 2 + static_cast<int>(rng.uniform_below(3));
    for (int b = 0; b < n_bins; ++b)
      grid.interference_bins.push_back(
          Interval{b / static_cast<double>(n_bins), (b + 1) / static_cast<double>(n_bins),
                   b + 1 == n_bins});
    grid.min_per_bin = 1 + static_cast<int>(rng.uniform_below(10));

    // Unique (x, y) keys across existing and pool keep the per-cell
    // availability counts exact.
    std::set<std::pair<TokenId, TokenId>> keys;
    const auto random_pair = [&](TokenId hi) {
      ScoredPair sp;
      do {
        sp.pair.x = 1 + static_cast<TokenId>(rng.uniform_below(hi));
        sp.pair.y = 1 + static_cast<TokenId>(rng.uniform_below(hi));
      } while (!keys.insert({sp.pair.x, sp.pair.y}).second);
      sp.pair.before_sim = 0.1 + 0.8 * rng.uniform01();
      sp.interference = rng.uniform01();
      return sp;
    };
    std::vector<ScoredPair> existing, pool;
    const int n_existing = static_cast<int>(rng.uniform_below(20));
    for (int i = 0; i < n_existing; ++i) existing.push_back(random_pair(60));
    const int n_pool = 50 + static_cast<int>(rng.uniform_below(200));
    for (int i = 0; i < n_pool; ++i) pool.push_back(random_pair(120));

    const std::uint64_t seed = rng.next();
    const auto result = joint_uniform_sample(grid, existing, pool, seed);

    // No duplicates among sampled pairs or against the existing set.
    std::set<std::pair<TokenId, TokenId>> seen;
    for (const auto& sp : existing) seen.insert({sp.pair.x, sp.pair.y});
    for (const auto& sp : result.sampled)
      CHECK(seen.insert({sp.pair.x, sp.pair.y}).second);

    REQUIRE(result.fills.size() ==
            static_cast<std::size_t>(n_groups) * static_cast<std::size_t>(n_bins));
    for (const auto& fill : result.fills) {
      const int target =
          std::min(grid.min_per_bin, fill.existing + fill.available);
      CHECK(fill.existing + fill.sampled >= std::min(target, fill.existing));
      // Exact contract: sampled = min(min_per_bin, existing+available) - existing
      // when that is positive, else 0 -- up to pool pairs landing in several
      // cells never happening (cells are disjoint), so equality holds.
      CHECK(fill.sampled == std::max(0, target - fill.existing));
    }

    // Determinism under the seed.
    const auto again = joint_uniform_sample(grid, existing, pool, seed);
    REQUIRE(again.sampled.size() == result.sampled.size());
    for (std::size_t i = 0; i < result.sampled.size(); ++i) {
      CHECK(again.sampled[i].pair.x == result.sampled[i].pair.x);
      CHECK(again.sampled[i].pair.y == result.sampled[i].pair.y);
    }
  }
}
