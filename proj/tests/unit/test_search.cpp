#include <doctest.h>

#include <cmath>
#include <set>

#include "assoclab/rng.hpp"
#include "assoclab/search.hpp"
#include "assoclab/synthetic_backend.hpp"

using namespace assoclab;

namespace {

std::set<TokenId> all_tokens(const Backend& backend) {
  std::set<TokenId> out;
  for (TokenId id = 1; id < backend.descriptor().vocab_size; ++id) out.insert(id);
  return out;
}

}  // namespace

TEST_CASE("default similarity groups tile [0.1, 0.95) in 0.05 steps") {
  const auto groups = default_similarity_groups();
  REQUIRE(groups.size() == 17);
  for (int i = 0; i < 17; ++i) {
    CHECK(groups[i].index == i);
    CHECK(groups[i].theta_min == doctest::Approx(0.1 + 0.05 * i));
    CHECK(groups[i].theta_max == doctest::Approx(0.15 + 0.05 * i));
    CHECK(groups[i].contains(groups[i].theta_min));
    CHECK(!groups[i].contains(groups[i].theta_max));  // half-open
  }
  CHECK(groups[3].midpoint() == doctest::Approx(0.275));
}

TEST_CASE("pair similarity equals a direct two-state cosine") {
  SyntheticBackend backend(21, 30, 6, 2);
  for (TokenId x : {3, 11}) {
    for (TokenId y : {5, 17, 29}) {
      const auto fwd = backend.forward(TokenSequence{{0, x, y}, true}, 2);
      const double direct = cosine(fwd.hidden.at(1).vector, fwd.hidden.at(2).vector);
      CHECK(pair_similarity_before_learning(backend, x, y, 2) ==
            doctest::Approx(direct).epsilon(1e-15));
    }
  }
}

TEST_CASE("brute_force_search finds exactly the in-interval pairs, best-first") {
  SyntheticBackend backend(9, 40, 8, 2);
  const auto candidates = all_tokens(backend);
  const TokenId x = 7;
  const int layer = 2;

  for (const auto& group : default_similarity_groups()) {
    const auto found = brute_force_search(backend, group, x, candidates, layer);
    std::set<TokenId> found_y;
    double prev = -1.0;
    for (const auto& pair : found) {
      CHECK(pair.x == x);
      CHECK(group.contains(pair.before_sim));
      CHECK(pair.before_sim ==
            doctest::Approx(pair_similarity_before_learning(backend, x, pair.y, layer))
                .epsilon(1e-15));
      const double dist = std::abs(pair.before_sim - group.midpoint());
      CHECK(dist >= prev);  // sorted by distance to midpoint
      prev = dist;
      found_y.insert(pair.y);
    }
    // Completeness: every candidate not returned is out of interval.
    for (TokenId y : candidates) {
      if (found_y.count(y)) continue;
      CHECK(!group.contains(pair_similarity_before_learning(backend, x, y, layer)));
    }
  }
}

TEST_CASE("gcg_search returns verified in-interval pairs when feasible") {
  SyntheticBackend backend(33, 60, 10, 2);
  const auto candidates = all_tokens(backend);
  const int layer = 2;
  SearchBudget budget;
  budget.top_k = 60;

  int feasible = 0, solved = 0;
  for (const auto& group : default_similarity_groups()) {
    for (TokenId x : {2, 19, 44}) {
      if (brute_force_search(backend, group, x, candidates, layer).empty()) continue;
      ++feasible;
      const auto res = gcg_search(backend, x, group, budget, layer, candidates, 1000 + x);
      if (!res.success) continue;
      ++solved;
      CHECK(res.pair.x == x);
      CHECK(res.pair.group_index == group.index);
      const double exact =
          pair_similarity_before_learning(backend, res.pair.x, res.pair.y, layer);
      CHECK(group.contains(exact));
      CHECK(res.pair.before_sim == doctest::Approx(exact).epsilon(1e-15));
    }
  }
  REQUIRE(feasible > 10);
  CHECK(solved == feasible);  // top_k = vocab makes every feasible case solvable
}

TEST_CASE("gcg_search costs zero iterations when the start is already in-interval") {
  SyntheticBackend backend(33, 60, 10, 2);
  const auto candidates = all_tokens(backend);
  const TokenId x = 2;
  const double s0 = pair_similarity_before_learning(backend, x, x, 2);
  const SimilarityGroup trivial{0, s0 - 1e-6, s0 + 1e-6};
  const auto res = gcg_search(backend, x, trivial, SearchBudget{}, 2, candidates, 5);
  CHECK(res.success);
  CHECK(res.iterations == 0);
  CHECK(res.pair.y == x);
}

TEST_CASE("gcg_search reports failure with the best-found pair") {
  SyntheticBackend backend(33, 20, 6, 1);
  const auto candidates = all_tokens(backend);
  const SimilarityGroup impossible{0, 0.999999, 0.9999995};
  SearchBudget budget;
  budget.max_iterations = 5;
  const auto res = gcg_search(backend, 4, impossible, budget, 1, candidates, 7);
  CHECK(!res.success);
  CHECK(res.iterations == 5);
  CHECK(res.best_loss ==
        doctest::Approx(std::pow(impossible.midpoint() - res.pair.before_sim, 2))
            .epsilon(1e-12));
}

TEST_CASE("gcg_search validates capability and candidates") {
  SyntheticBackend backend(1, 10, 4, 1);
  const SimilarityGroup group{0, 0.1, 0.2};
  try {
    gcg_search(backend, 1, group, SearchBudget{}, 1, {}, 1);
    FAIL("expected error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SearchInfeasible);
  }
}

TEST_CASE("backtracking variant still returns exact in-interval pairs") {
  SyntheticBackend backend(33, 60, 10, 2);
  const auto candidates = all_tokens(backend);
  SearchBudget budget;
  budget.top_k = 60;
  budget.use_backtracking = true;

  int solved = 0;
  for (const auto& group : default_similarity_groups()) {
    if (brute_force_search(backend, group, 19, candidates, 2).empty()) continue;
    const auto res = gcg_search(backend, 19, group, budget, 2, candidates, 77);
    if (res.success) {
      ++solved;
      CHECK(group.contains(
          pair_similarity_before_learning(backend, 19, res.pair.y, 2)));
    }
  }
  CHECK(solved > 0);
}

TEST_CASE("build_stimulus_set fills groups without duplicate ordered pairs") {
  SyntheticBackend backend(33, 60, 10, 2);
  const auto candidates = all_tokens(backend);
  SearchBudget budget;
  budget.top_k = 60;
  const auto groups = default_similarity_groups();
  const auto set =
      build_stimulus_set(backend, groups, 2, 2, 12, budget, candidates, 99);

  std::set<std::pair<TokenId, TokenId>> seen;
  for (const auto& rec : set.pairs) {
    CHECK(seen.insert({rec.pair.x, rec.pair.y}).second);
    REQUIRE(rec.pair.group_index.has_value());
    CHECK(groups.at(*rec.pair.group_index).contains(rec.pair.before_sim));
  }
  REQUIRE(set.fills.size() == groups.size());
  for (const auto& fill : set.fills) {
    CHECK(fill.requested == 2);
    CHECK(fill.achieved <= 2);
    CHECK(fill.restarts_used <= 12);
  }

  // Deterministic under the seed.
  const auto again =
      build_stimulus_set(backend, groups, 2, 2, 12, budget, candidates, 99);
  REQUIRE(again.pairs.size() == set.pairs.size());
  for (std::size_t i = 0; i < set.pairs.size(); ++i) {
    CHECK(again.pairs[i].pair.x == set.pairs[i].pair.x);
    CHECK(again.pairs[i].pair.y == set.pairs[i].pair.y);
    CHECK(again.pairs[i].seed == set.pairs[i].seed);
  }
}

TEST_CASE("build_stimulus_set rejects overlapping groups") {
  SyntheticBackend backend(1, 20, 4, 1);
  const std::vector<SimilarityGroup> overlapping{{0, 0.1, 0.3}, {1, 0.2, 0.4}};
  CHECK_THROWS_AS(build_stimulus_set(backend, overlapping, 1, 1, 1, SearchBudget{},
                                     all_tokens(backend), 1),
                  Error);
}
