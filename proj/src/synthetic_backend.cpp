#include "assoclab/synthetic_backend.hpp"

#include <cmath>

#include "assoclab/rng.hpp"

namespace assoclab {

namespace {

std::vector<double> matvec(const std::vector<std::vector<double>>& m,
                           const std::vector<double>& v) {
  std::vector<double> out(m.size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) acc += m[i][j] * v[j];
    out[i] = acc;
  }
  return out;
}

std::vector<double> matvec_t(const std::vector<std::vector<double>>& m,
                             const std::vector<double>& v) {
  std::vector<double> out(m[0].size(), 0.0);
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < out.size(); ++j) out[j] += m[i][j] * v[i];
  return out;
}

}  // namespace

SyntheticBackend::SyntheticBackend(std::uint64_t seed, TokenId vocab_size,
                                   int hidden_dim, int layer_count)
    : seed_(seed) {
  if (vocab_size < 2 || hidden_dim < 1 || layer_count < 1)
    throw Error(ErrorCode::InputError, "invalid synthetic backend shape");
  desc_.model_id = "synthetic:" + std::to_string(seed) + ":" +
                   std::to_string(vocab_size) + ":" + std::to_string(hidden_dim) +
                   ":" + std::to_string(layer_count);
  desc_.vocab_size = vocab_size;
  desc_.layer_count = layer_count;
  desc_.hidden_dim = hidden_dim;
  desc_.max_context = 8192;
  desc_.has_bos = true;

  Rng rng(Rng::derive(seed, "synthetic-weights"));
  const double scale = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  embed_.assign(vocab_size, std::vector<double>(hidden_dim));
  for (auto& row : embed_)
    for (auto& v : row) v = rng.normal();
  w_.assign(layer_count, {});
  u_.assign(layer_count, {});
  bias_.assign(layer_count, std::vector<double>(hidden_dim));
  for (int l = 0; l < layer_count; ++l) {
    w_[l].assign(hidden_dim, std::vector<double>(hidden_dim));
    u_[l].assign(hidden_dim, std::vector<double>(hidden_dim));
    for (auto& row : w_[l])
      for (auto& v : row) v = rng.normal() * scale;
    for (auto& row : u_[l])
      for (auto& v : row) v = rng.normal() * scale;
    for (auto& v : bias_[l]) v = rng.normal() * 0.1;
  }
}

std::string SyntheticBackend::token_text(TokenId id) const {
  if (id < 0 || id >= desc_.vocab_size)
    throw Error(ErrorCode::RangeError, "token id out of range");
  if (id == 0) return "<bos>";
  // Letters-only pseudo-words, bijective base-26.
  std::string s;
  TokenId n = id;
  while (n > 0) {
    n -= 1;
    s.push_back(static_cast<char>('a' + n % 26));
    n /= 26;
  }
  return {s.rbegin(), s.rend()};
}

SyntheticBackend::Activations SyntheticBackend::run(
    const TokenSequence& seq, int soft_position,
    const std::vector<double>* weights) const {
  const int n = static_cast<int>(seq.ids.size());
  const int dim = desc_.hidden_dim;
  Activations out;
  out.acts.assign(desc_.layer_count + 1, std::vector<std::vector<double>>(n));

  for (int p = 0; p < n; ++p) {
    if (weights && p == soft_position) {
      std::vector<double> mix(dim, 0.0);
      for (TokenId v = 0; v < desc_.vocab_size; ++v) {
        const double w = (*weights)[v];
        if (w == 0.0) continue;
        for (int i = 0; i < dim; ++i) mix[i] += w * embed_[v][i];
      }
      out.acts[0][p] = std::move(mix);
    } else {
      out.acts[0][p] = embed_[seq.ids[p]];
    }
  }

  for (int l = 1; l <= desc_.layer_count; ++l) {
    std::vector<double> prefix(dim, 0.0);
    for (int p = 0; p < n; ++p) {
      for (int i = 0; i < dim; ++i) prefix[i] += out.acts[l - 1][p][i];
      std::vector<double> ctx(dim);
      for (int i = 0; i < dim; ++i) ctx[i] = prefix[i] / (p + 1);
      auto z = matvec(w_[l - 1], out.acts[l - 1][p]);
      auto uz = matvec(u_[l - 1], ctx);
      for (int i = 0; i < dim; ++i) z[i] = std::tanh(z[i] + uz[i] + bias_[l - 1][i]);
      out.acts[l][p] = std::move(z);
    }
  }

  out.logits.assign(desc_.vocab_size, 0.0);
  const auto& last = out.acts[desc_.layer_count][n - 1];
  for (TokenId v = 0; v < desc_.vocab_size; ++v) {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) acc += embed_[v][i] * last[i];
    out.logits[v] = acc;
  }
  return out;
}

ForwardResult SyntheticBackend::pack(const Activations& acts, int layer) const {
  ForwardResult fr;
  const int n = static_cast<int>(acts.acts[layer].size());
  fr.hidden.reserve(n);
  for (int p = 0; p < n; ++p)
    fr.hidden.push_back(HiddenState{acts.acts[layer][p], layer, p});
  fr.logits = acts.logits;
  return fr;
}

ForwardResult SyntheticBackend::forward(const TokenSequence& seq, int layer) const {
  check_sequence(seq, layer);
  return pack(run(seq, -1, nullptr), layer);
}

ForwardResult SyntheticBackend::forward_soft(const TokenSequence& seq, int position,
                                             const std::vector<double>& weights,
                                             int layer) const {
  check_sequence(seq, layer);
  if (position < 0 || position >= static_cast<int>(seq.ids.size()))
    throw Error(ErrorCode::RangeError, "soft position out of range");
  if (static_cast<TokenId>(weights.size()) != desc_.vocab_size)
    throw Error(ErrorCode::RangeError, "weights must have vocab_size entries");
  return pack(run(seq, position, &weights), layer);
}

std::vector<double> SyntheticBackend::input_gradient(const TokenSequence& seq,
                                                     int position,
                                                     const DifferentiableLoss& loss,
                                                     int layer) const {
  check_sequence(seq, layer);
  const int n = static_cast<int>(seq.ids.size());
  if (position < 0 || position >= n)
    throw Error(ErrorCode::RangeError, "gradient position out of range");
  const int dim = desc_.hidden_dim;
  const int depth = desc_.layer_count;

  const Activations acts = run(seq, -1, nullptr);
  const ForwardResult outputs = pack(acts, layer);

  // Seed output gradients.
  std::vector<std::vector<std::vector<double>>> g(
      depth + 1, std::vector<std::vector<double>>(n, std::vector<double>(dim, 0.0)));
  const auto hg = loss.hidden_grad(outputs);
  for (int p = 0; p < static_cast<int>(hg.size()) && p < n; ++p) {
    if (hg[p].empty()) continue;
    for (int i = 0; i < dim; ++i) g[layer][p][i] += hg[p][i];
  }
  const auto lg = loss.logits_grad(outputs);
  if (!lg.empty()) {
    // logits_v = E[v] . x^L_{n-1}
    for (TokenId v = 0; v < desc_.vocab_size; ++v) {
      if (lg[v] == 0.0) continue;
      for (int i = 0; i < dim; ++i) g[depth][n - 1][i] += lg[v] * embed_[v][i];
    }
  }

  for (int l = depth; l >= 1; --l) {
    // delta through tanh.
    std::vector<std::vector<double>> delta(n, std::vector<double>(dim));
    for (int p = 0; p < n; ++p)
      for (int i = 0; i < dim; ++i) {
        const double h = acts.acts[l][p][i];
        delta[p][i] = (1.0 - h * h) * g[l][p][i];
      }
    // Context term: a_q = mean_{r<=q} x^{l-1}_r, so each position p receives
    // U^T delta_q / (q+1) from all q >= p. Accumulate as a suffix sum.
    std::vector<double> suffix(dim, 0.0);
    for (int p = n - 1; p >= 0; --p) {
      auto ud = matvec_t(u_[l - 1], delta[p]);
      for (int i = 0; i < dim; ++i) suffix[i] += ud[i] / (p + 1);
      auto wd = matvec_t(w_[l - 1], delta[p]);
      for (int i = 0; i < dim; ++i) g[l - 1][p][i] += wd[i] + suffix[i];
    }
  }

  std::vector<double> grad(desc_.vocab_size, 0.0);
  const auto& gin = g[0][position];
  for (TokenId v = 0; v < desc_.vocab_size; ++v) {
    double acc = 0.0;
    for (int i = 0; i < dim; ++i) acc += embed_[v][i] * gin[i];
    grad[v] = acc;
  }
  return grad;
}

}  // namespace assoclab
