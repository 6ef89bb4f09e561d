#pragma once

#include <cstdint>

#include "assoclab/backend.hpp"

namespace assoclab {

// Small seeded causal network used for oracle-checked tests. Architecture:
//   x0_p = sum_v w_v E[v]            (w one-hot for ordinary forwards)
//   a_p  = mean_{q<=p} x^{l-1}_q     (causal context)
//   x^l_p = tanh(W_l x^{l-1}_p + U_l a_p + b_l)
//   logits = E x^L_{n-1}             (tied readout)
// All weights are drawn from the seed, so two instances with the same URI
// are bit-identical.
class SyntheticBackend : public Backend {
 public:
  SyntheticBackend(std::uint64_t seed, TokenId vocab_size, int hidden_dim, int layer_count);

  const BackendDescriptor& descriptor() const override { return desc_; }
  TokenId bos_id() const override { return 0; }
  std::set<TokenId> special_ids() const override { return {0}; }
  std::string token_text(TokenId id) const override;

  ForwardResult forward(const TokenSequence& seq, int layer) const override;
  bool supports_gradients() const override { return true; }
  std::vector<double> input_gradient(const TokenSequence& seq, int position,
                                     const DifferentiableLoss& loss,
                                     int layer) const override;

  // Forward pass with the token at `position` replaced by the relaxed
  // selection `weights` (length vocab_size). Exposed so finite-difference
  // oracles can probe the same surface input_gradient differentiates.
  ForwardResult forward_soft(const TokenSequence& seq, int position,
                             const std::vector<double>& weights, int layer) const;

  std::uint64_t seed() const { return seed_; }

 private:
  struct Activations {
    // acts[l][p], l = 0..layer_count, each vector hidden_dim long.
    std::vector<std::vector<std::vector<double>>> acts;
    std::vector<double> logits;
  };

  Activations run(const TokenSequence& seq, int soft_position,
                  const std::vector<double>* weights) const;
  ForwardResult pack(const Activations& acts, int layer) const;

  BackendDescriptor desc_;
  std::uint64_t seed_;
  std::vector<std::vector<double>> embed_;            // vocab x dim
  std::vector<std::vector<std::vector<double>>> w_;   // layer x dim x dim
  std::vector<std::vector<std::vector<double>>> u_;   // layer x dim x dim
  std::vector<std::vector<double>> bias_;             // layer x dim
};

}  // namespace assoclab
