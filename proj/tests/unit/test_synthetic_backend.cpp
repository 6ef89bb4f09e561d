#include <doctest.h>

#include <cmath>
#include <vector>

#include "assoclab/rng.hpp"
#include "assoclab/synthetic_backend.hpp"

using namespace assoclab;

namespace {

// Straight-line re-implementation of the synthetic forward pass, written
// independently of the production code path and kept deliberately naive.
struct OracleNet {
  int vocab, dim, layers;
  std::vector<std::vector<double>> embed;
  std::vector<std::vector<std::vector<double>>> w, u;
  std::vector<std::vector<double>> bias;

  OracleNet(std::uint64_t seed, int vocab_, int dim_, int layers_)
      : vocab(vocab_), dim(dim_), layers(layers_) {
    Rng rng(Rng::derive(seed, "synthetic-weights"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
    embed.assign(vocab, std::vector<double>(dim));
    for (int v = 0; v < vocab; ++v)
      for (int i = 0; i < dim; ++i) embed[v][i] = rng.normal();
    w.resize(layers);
    u.resize(layers);
    bias.assign(layers, std::vector<double>(dim));
    for (int l = 0; l < layers; ++l) {
      w[l].assign(dim, std::vector<double>(dim));
      u[l].assign(dim, std::vector<double>(dim));
      for (int i = 0; i < dim; ++i)
        for (int k = 0; k < dim; ++k) w[l][i][k] = rng.normal() * scale;
      for (int i = 0; i < dim; ++i)
        for (int k = 0; k < dim; ++k) u[l][i][k] = rng.normal() * scale;
      for (int i = 0; i < dim; ++i) bias[l][i] = rng.normal() * 0.1;
    }
  }

  // Returns the state of position `pos` at `layer` (1-based) and, via
  // `logits_out`, the readout after the last position.
  std::vector<double> state(const std::vector<TokenId>& ids, int pos, int layer,
                            std::vector<double>* logits_out = nullptr) const {
    const int n = static_cast<int>(ids.size());
    std::vector<std::vector<double>> x(n);
    for (int p = 0; p < n; ++p) x[p] = embed[ids[p]];
    std::vector<std::vector<double>> requested;
    for (int l = 0; l < layers; ++l) {
      std::vector<std::vector<double>> nx(n, std::vector<double>(dim));
      for (int p = 0; p < n; ++p) {
        std::vector<double> ctx(dim, 0.0);
        for (int q = 0; q <= p; ++q)
          for (int i = 0; i < dim; ++i) ctx[i] += x[q][i];
        for (int i = 0; i < dim; ++i) ctx[i] /= (p + 1);
        for (int i = 0; i < dim; ++i) {
          double z = bias[l][i];
          for (int k = 0; k < dim; ++k)
            z += w[l][i][k] * x[p][k] + u[l][i][k] * ctx[k];
          nx[p][i] = std::tanh(z);
        }
      }
      x = nx;
      if (l + 1 == layer) requested = x;
    }
    if (logits_out) {
      logits_out->assign(vocab, 0.0);
      for (int v = 0; v < vocab; ++v)
        for (int i = 0; i < dim; ++i) (*logits_out)[v] += embed[v][i] * x[n - 1][i];
    }
    return requested[pos];
  }
};

}  // namespace

TEST_CASE("synthetic forward matches a straight-line oracle") {
  const std::uint64_t seed = 31;
  SyntheticBackend backend(seed, 12, 4, 2);
  OracleNet oracle(seed, 12, 4, 2);

  const std::vector<std::vector<TokenId>> cases = {
      {0, 3}, {0, 5, 7}, {0, 1, 2, 3, 4, 5}, {0, 11, 11, 11}};
  for (const auto& ids : cases) {
    for (int layer = 1; layer <= 2; ++layer) {
      const auto fwd = backend.forward(TokenSequence{ids, true}, layer);
      REQUIRE(fwd.hidden.size() == ids.size());
      for (std::size_t p = 0; p < ids.size(); ++p) {
        std::vector<double> logits;
        const auto expect =
            oracle.state(ids, static_cast<int>(p), layer,
                         layer == 2 ? &logits : nullptr);
        REQUIRE(fwd.hidden[p].vector.size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i)
          CHECK(fwd.hidden[p].vector[i] == doctest::Approx(expect[i]).epsilon(1e-12));
        if (layer == 2)
          for (int v = 0; v < 12; ++v)
            CHECK(fwd.logits[v] == doctest::Approx(logits[v]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("synthetic backend is causal and seed-deterministic") {
  SyntheticBackend a(7, 20, 6, 3), b(7, 20, 6, 3);
  const TokenSequence longer{{0, 4, 9, 2, 13}, true};
  const TokenSequence shorter{{0, 4, 9}, true};
  const auto fl = a.forward(longer, 3);
  const auto fs = a.forward(shorter, 3);
  for (int p = 0; p < 3; ++p)
    CHECK(fl.hidden[p].vector == fs.hidden[p].vector);  // prefix-identical

  const auto fb = b.forward(longer, 3);
  for (std::size_t p = 0; p < longer.ids.size(); ++p)
    CHECK(fl.hidden[p].vector == fb.hidden[p].vector);
  CHECK(fl.logits == fb.logits);
}

TEST_CASE("forward_soft with one-hot weights equals hard forward") {
  SyntheticBackend backend(5, 15, 4, 2);
  const TokenSequence seq{{0, 3, 8, 1}, true};
  std::vector<double> onehot(15, 0.0);
  onehot[8] = 1.0;
  const auto hard = backend.forward(seq, 2);
  const auto soft = backend.forward_soft(seq, 2, onehot, 2);
  for (std::size_t p = 0; p < seq.ids.size(); ++p)
    for (std::size_t i = 0; i < hard.hidden[p].vector.size(); ++i)
      CHECK(soft.hidden[p].vector[i] ==
            doctest::Approx(hard.hidden[p].vector[i]).epsilon(1e-14));
}

TEST_CASE("input_gradient matches central finite differences") {
  const int vocab = 15, dim = 5, depth = 2;
  SyntheticBackend backend(13, vocab, dim, depth);
  Rng rng(4242);

  int checked = 0;
  for (int c = 0; c < 10; ++c) {
    std::vector<TokenId> ids{0};
    const int len = 3 + static_cast<int>(rng.uniform_below(4));
    for (int i = 0; i < len; ++i)
      ids.push_back(1 + static_cast<TokenId>(rng.uniform_below(vocab - 1)));
    const TokenSequence seq{ids, true};
    const int position = 1 + static_cast<int>(rng.uniform_below(ids.size() - 1));
    const int layer = 1 + static_cast<int>(rng.uniform_below(depth));
    const PairCosineLoss loss(0.3, 1, static_cast<int>(ids.size()) - 1);

    const auto grad = backend.input_gradient(seq, position, loss, layer);
    REQUIRE(static_cast<int>(grad.size()) == vocab);

    std::vector<double> base(vocab, 0.0);
    base[ids[position]] = 1.0;
    const double eps = 1e-6;
    for (int probe = 0; probe < 10; ++probe) {
      const TokenId v = static_cast<TokenId>(rng.uniform_below(vocab));
      auto wp = base, wm = base;
      wp[v] += eps;
      wm[v] -= eps;
      const double lp = loss.value(backend.forward_soft(seq, position, wp, layer));
      const double lm = loss.value(backend.forward_soft(seq, position, wm, layer));
      const double fd = (lp - lm) / (2.0 * eps);
      const double denom = std::max({std::abs(fd), std::abs(grad[v]), 1e-8});
      CHECK(std::abs(grad[v] - fd) / denom < 1e-3);
      ++checked;
    }
  }
  CHECK(checked == 100);
}

TEST_CASE("synthetic token_text is bijective letters-only") {
  SyntheticBackend backend(1, 800, 2, 1);
  CHECK(backend.token_text(0) == "<bos>");
  CHECK(backend.token_text(1) == "a");
  CHECK(backend.token_text(26) == "z");
  CHECK(backend.token_text(27) == "aa");
  std::set<std::string> seen;
  for (TokenId id = 1; id < 800; ++id) CHECK(seen.insert(backend.token_text(id)).second);
  CHECK_THROWS_AS(backend.token_text(800), Error);
}

TEST_CASE("synthetic rejects invalid shapes and overlong sequences") {
  CHECK_THROWS_AS(SyntheticBackend(1, 1, 4, 2), Error);
  SyntheticBackend backend(1, 10, 2, 1);
  backend.set_memory_cap(8);
  std::vector<TokenId> ids(9, 1);
  ids[0] = 0;
  try {
    backend.forward(TokenSequence{ids, true}, 1);
    FAIL("expected context overflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ContextOverflow);
  }
}
