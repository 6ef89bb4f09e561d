#pragma once

#include <string>

#include "assoclab/backend.hpp"

namespace assoclab {

// Adapter for pretrained causal models served over HTTP (see
// tools/serve_real_backend.py for a transformers-based server). Endpoints:
//   POST /v1/descriptor      {"model_id"}            -> descriptor + specials
//   POST /v1/forward         {"model_id","ids","layer"} -> {"hidden","logits"}
//   POST /v1/input_gradient  {"model_id","ids","position","layer","loss"}
//   POST /v1/token_text      {"model_id","ids"}      -> {"texts"}
// The base URL comes from ASSOCLAB_BACKEND_URL (default
// http://127.0.0.1:8631).
class RealBackend : public Backend {
 public:
  explicit RealBackend(const std::string& model_id);
  RealBackend(const std::string& model_id, const std::string& base_url);

  const BackendDescriptor& descriptor() const override { return desc_; }
  TokenId bos_id() const override { return bos_id_; }
  std::set<TokenId> special_ids() const override { return special_ids_; }
  std::string token_text(TokenId id) const override;

  ForwardResult forward(const TokenSequence& seq, int layer) const override;
  bool supports_gradients() const override { return true; }
  std::vector<double> input_gradient(const TokenSequence& seq, int position,
                                     const DifferentiableLoss& loss,
                                     int layer) const override;

  // Weights revision/content hash reported by the server, for manifests.
  const std::string& revision() const { return revision_; }

 private:
  std::string post_json(const std::string& path, const std::string& body) const;

  std::string model_id_;
  std::string host_;
  int port_ = 0;
  BackendDescriptor desc_;
  TokenId bos_id_ = 0;
  std::set<TokenId> special_ids_;
  std::string revision_;
};

}  // namespace assoclab
