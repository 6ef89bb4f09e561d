#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "assoclab/error.hpp"

namespace assoclab {

using TokenId = std::int32_t;

struct BackendDescriptor {
  std::string model_id;
  TokenId vocab_size = 0;
  int layer_count = 0;
  int max_context = 0;
  int hidden_dim = 0;
  bool has_bos = false;
};

struct TokenSequence {
  std::vector<TokenId> ids;
  bool bos_included = false;

  std::size_t size() const { return ids.size(); }
};

struct HiddenState {
  std::vector<double> vector;
  int layer = 0;
  int position = 0;
};

struct VocabularyFilter {
  bool exclude_stopwords = false;
  bool exclude_punctuation = false;
  bool exclude_numerals = false;
  std::optional<std::string> allowlist_path;
  // Special ids (BOS/EOS/padding) are always excluded.
};

struct ForwardResult {
  std::vector<HiddenState> hidden;  // one per input position, at the requested layer
  std::vector<double> logits;       // next-token logits after the final position
};

// Scalar loss over forward outputs, with gradients with respect to those
// outputs so differentiable backends can backpropagate to the input.
class DifferentiableLoss {
 public:
  virtual ~DifferentiableLoss() = default;

  virtual double value(const ForwardResult& out) const = 0;

  // d loss / d hidden[p] at the forward's requested layer. Empty vector
  // means zero gradient for that position.
  virtual std::vector<std::vector<double>> hidden_grad(const ForwardResult& out) const = 0;

  // d loss / d logits. Empty vector means zero.
  virtual std::vector<double> logits_grad(const ForwardResult& out) const = 0;

  // Serializable description for remote backends, or nullopt if the loss
  // only exists in-process.
  virtual std::optional<std::string> wire_json() const { return std::nullopt; }
};

// Loss (target - cos(h_a, h_b))^2 over two hidden positions of one forward.
class PairCosineLoss : public DifferentiableLoss {
 public:
  PairCosineLoss(double target, int pos_a, int pos_b)
      : target_(target), pos_a_(pos_a), pos_b_(pos_b) {}

  double value(const ForwardResult& out) const override;
  std::vector<std::vector<double>> hidden_grad(const ForwardResult& out) const override;
  std::vector<double> logits_grad(const ForwardResult& out) const override;
  std::optional<std::string> wire_json() const override;

  double target() const { return target_; }
  int pos_a() const { return pos_a_; }
  int pos_b() const { return pos_b_; }

 private:
  double target_;
  int pos_a_;
  int pos_b_;
};

class Backend {
 public:
  virtual ~Backend() = default;

  virtual const BackendDescriptor& descriptor() const = 0;

  virtual TokenId bos_id() const = 0;
  virtual std::set<TokenId> special_ids() const = 0;
  virtual std::string token_text(TokenId id) const = 0;

  // Hidden states at `layer` (1-based, 1..layer_count) for every position,
  // plus next-token logits after the final position.
  virtual ForwardResult forward(const TokenSequence& seq, int layer) const = 0;

  virtual bool supports_gradients() const = 0;

  // Gradient of `loss` with respect to the relaxed token-selection
  // coefficients at `position`, evaluated at the current one-hot selection.
  // `layer` is the layer the forward outputs are taken from.
  virtual std::vector<double> input_gradient(const TokenSequence& seq, int position,
                                             const DifferentiableLoss& loss,
                                             int layer) const = 0;

  std::set<TokenId> filtered_vocabulary(const VocabularyFilter& filter) const;

  // Effective context: min(max_context, memory_cap).
  int effective_context() const {
    return std::min(descriptor().max_context, memory_cap_);
  }
  void set_memory_cap(int cap) { memory_cap_ = cap; }
  int memory_cap() const { return memory_cap_; }

 protected:
  void check_sequence(const TokenSequence& seq, int layer) const;

 private:
  int memory_cap_ = 40000;  // tokens; configurable
};

double cosine(const std::vector<double>& a, const std::vector<double>& b);

// URI forms: "synthetic:<seed>:<vocab>:<dim>:<layers>", "mock:<script-path>",
// "real:<model_id>".
std::shared_ptr<Backend> make_backend(const std::string& uri);

}  // namespace assoclab
