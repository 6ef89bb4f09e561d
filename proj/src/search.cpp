#include "assoclab/search.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "assoclab/rng.hpp"

namespace assoclab {

std::vector<SimilarityGroup> default_similarity_groups() {
  std::vector<SimilarityGroup> groups;
  groups.reserve(17);
  for (int i = 0; i < 17; ++i)
    groups.push_back(SimilarityGroup{i, 0.1 + 0.05 * i, 0.1 + 0.05 * (i + 1)});
  return groups;
}

double pair_similarity_before_learning(const Backend& backend, TokenId x, TokenId y,
                                       int layer) {
  // All supported backends are causal, so h_x1 from [BOS, x, y] at position 1
  // equals h_x1 from [BOS, x]; a single forward covers both states.
  TokenSequence seq{{backend.bos_id(), x, y}, true};
  const auto out = backend.forward(seq, layer);
  return cosine(out.hidden.at(1).vector, out.hidden.at(2).vector);
}

GcgResult gcg_search(const Backend& backend, TokenId x_init, const SimilarityGroup& group,
                     const SearchBudget& budget, int layer,
                     const std::set<TokenId>& candidates, std::uint64_t seed) {
  if (candidates.empty())
    throw Error(ErrorCode::SearchInfeasible, "empty candidate set");
  if (!backend.supports_gradients())
    throw Error(ErrorCode::CapabilityError,
                "gcg_search requires a differentiable backend");

  const double mid = group.midpoint();
  const auto sim_of = [&](TokenId y) {
    return pair_similarity_before_learning(backend, x_init, y, layer);
  };
  const auto loss_of = [&](double s) {
    const double d = mid - s;
    return d * d;
  };

  Rng rng(Rng::derive(seed, "gcg-shuffle"));

  TokenId y = x_init;
  double sim = sim_of(y);
  double loss = loss_of(sim);

  GcgResult result;
  result.seed = seed;
  result.pair = TokenPair{x_init, y, sim, std::nullopt, layer, std::nullopt};
  result.best_loss = loss;

  const auto note_best = [&](TokenId cand, double s, double l) {
    if (l < result.best_loss) {
      result.best_loss = l;
      result.pair = TokenPair{x_init, cand, s, std::nullopt, layer, std::nullopt};
    }
  };
  const auto finish = [&](TokenId y_final) {
    const double exact = sim_of(y_final);
    if (!group.contains(exact)) return false;
    result.success = true;
    result.pair = TokenPair{x_init, y_final, exact, group.index, layer, std::nullopt};
    return true;
  };

  if (finish(y)) return result;  // initial pair already in interval

  double bound = std::numeric_limits<double>::infinity();

  for (int it = 1; it <= budget.max_iterations; ++it) {
    result.iterations = it;
    const TokenSequence seq{{backend.bos_id(), x_init, y}, true};
    const PairCosineLoss loss_fn(mid, 1, 2);
    const auto grad = backend.input_gradient(seq, 2, loss_fn, layer);

    double max_neg_mag = 0.0;
    std::vector<TokenId> pool;
    pool.reserve(candidates.size());
    for (TokenId v : candidates) {
      const double g = grad[v];
      if (g < 0.0) max_neg_mag = std::max(max_neg_mag, -g);
      if (budget.use_backtracking && (g > 0.0 || g < -bound)) continue;
      pool.push_back(v);
    }

    if (pool.empty()) {
      // Bound excluded everything: shrink and retry next iteration.
      bound = std::max(budget.gradient_bound_floor,
                       budget.shrink_beta *
                           (std::isfinite(bound) ? bound : max_neg_mag));
      continue;
    }

    std::sort(pool.begin(), pool.end(), [&](TokenId a, TokenId b) {
      if (grad[a] != grad[b]) return grad[a] < grad[b];
      return a < b;
    });
    if (static_cast<int>(pool.size()) > budget.top_k) pool.resize(budget.top_k);
    rng.shuffle(pool);

    TokenId best_cand = pool.front();
    double best_sim = 0.0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (TokenId v : pool) {
      const double s = sim_of(v);
      const double l = loss_of(s);
      note_best(v, s, l);
      if (l < best_loss) {
        best_loss = l;
        best_sim = s;
        best_cand = v;
      }
    }

    bool accept = true;
    if (budget.use_backtracking) {
      const double predicted = std::max(0.0, -grad[best_cand]);
      accept = (loss - best_loss) >= budget.armijo_alpha * predicted;
    }
    if (accept) {
      y = best_cand;
      sim = best_sim;
      loss = best_loss;
      if (group.contains(sim) && finish(y)) return result;
    } else {
      bound = std::max(budget.gradient_bound_floor,
                       budget.shrink_beta *
                           (std::isfinite(bound) ? bound : max_neg_mag));
    }
  }

  return result;  // failure report with best-found pair
}

std::vector<TokenPair> brute_force_search(const Backend& backend,
                                          const SimilarityGroup& group, TokenId x,
                                          const std::set<TokenId>& candidates,
                                          int layer) {
  std::vector<TokenPair> out;
  for (TokenId y : candidates) {
    const double s = pair_similarity_before_learning(backend, x, y, layer);
    if (group.contains(s))
      out.push_back(TokenPair{x, y, s, group.index, layer, std::nullopt});
  }
  const double mid = group.midpoint();
  std::sort(out.begin(), out.end(), [&](const TokenPair& a, const TokenPair& b) {
    const double da = std::abs(a.before_sim - mid), db = std::abs(b.before_sim - mid);
    if (da != db) return da < db;
    return a.y < b.y;
  });
  return out;
}

StimulusSet build_stimulus_set(const Backend& backend,
                               const std::vector<SimilarityGroup>& groups,
                               int pairs_per_group, int layer, int restarts,
                               const SearchBudget& budget,
                               const std::set<TokenId>& candidates,
                               std::uint64_t seed) {
  for (std::size_t i = 0; i < groups.size(); ++i)
    for (std::size_t j = i + 1; j < groups.size(); ++j)
      if (groups[i].theta_min < groups[j].theta_max &&
          groups[j].theta_min < groups[i].theta_max)
        throw Error(ErrorCode::InputError, "similarity groups overlap");

  StimulusSet set;
  std::unordered_set<std::uint64_t> seen;  // ordered (x, y)
  const auto key = [](TokenId x, TokenId y) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) |
           static_cast<std::uint32_t>(y);
  };
  std::vector<TokenId> cand_list(candidates.begin(), candidates.end());

  for (const auto& group : groups) {
    GroupFillReport fill{group.index, pairs_per_group, 0, 0};
    for (int attempt = 0; attempt < restarts && fill.achieved < pairs_per_group;
         ++attempt) {
      ++fill.restarts_used;
      const std::uint64_t search_seed = Rng::derive(
          seed, "search-g" + std::to_string(group.index) + "-a" +
                    std::to_string(attempt));
      Rng rng(search_seed);
      if (cand_list.empty())
        throw Error(ErrorCode::SearchInfeasible, "empty candidate set");
      const TokenId x_init =
          cand_list[static_cast<std::size_t>(rng.uniform_below(cand_list.size()))];
      const auto res =
          gcg_search(backend, x_init, group, budget, layer, candidates, search_seed);
      if (!res.success) continue;
      if (!seen.insert(key(res.pair.x, res.pair.y)).second) continue;
      set.pairs.push_back(StimulusSearchRecord{res.pair, search_seed, res.iterations});
      ++fill.achieved;
    }
    set.fills.push_back(fill);
  }
  return set;
}

}  // namespace assoclab
