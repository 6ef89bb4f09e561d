#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "assoclab/backend.hpp"

namespace assoclab {

// Scripted backend for golden pipeline tests. The script is a JSON file:
//
//   {
//     "model_id": "mock",
//     "vocab_size": 64, "layer_count": 1, "hidden_dim": 2,
//     "max_context": 4096, "bos_id": 0, "special_ids": [0],
//     "tokens": ["<bos>", "house", ...],          // optional
//     "rules": [
//       {"prefix": [0, 3], "hidden": [0.6, 0.8]},  // state at the prefix's
//                                                  // last position, for any
//                                                  // sequence starting so
//       {"prefix": [0, 3, 5], "next": 5},          // argmax of final logits
//                                                  // when the sequence is
//                                                  // exactly the prefix
//       {"prefix": [0, 3, 5], "logits": [ ... ]}   // or explicit logits
//     ]
//   }
//
// The prefix keying makes the mock causal: the state at position p depends
// only on ids[0..p]. Unscripted positions get a deterministic unit vector
// hashed from the prefix; unscripted final logits favor token 0. The layer
// argument is validated but all layers share the scripted states.
class MockBackend : public Backend {
 public:
  explicit MockBackend(const std::string& script_path);

  const BackendDescriptor& descriptor() const override { return desc_; }
  TokenId bos_id() const override { return bos_id_; }
  std::set<TokenId> special_ids() const override { return special_ids_; }
  std::string token_text(TokenId id) const override;

  ForwardResult forward(const TokenSequence& seq, int layer) const override;
  bool supports_gradients() const override { return false; }
  std::vector<double> input_gradient(const TokenSequence&, int,
                                     const DifferentiableLoss&, int) const override {
    throw Error(ErrorCode::CapabilityError, "mock backend is not differentiable");
  }

 private:
  std::vector<double> state_for_prefix(const std::vector<TokenId>& prefix) const;

  BackendDescriptor desc_;
  TokenId bos_id_ = 0;
  std::set<TokenId> special_ids_;
  std::vector<std::string> tokens_;
  std::map<std::vector<TokenId>, std::vector<double>> hidden_rules_;
  std::map<std::vector<TokenId>, std::vector<double>> logit_rules_;
};

}  // namespace assoclab
