#include "assoclab/mock_backend.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "assoclab/rng.hpp"

namespace assoclab {

MockBackend::MockBackend(const std::string& script_path) {
  std::ifstream in(script_path);
  if (!in)
    throw Error(ErrorCode::InputError, "mock script unreadable: " + script_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InputError,
                "mock script parse failure: " + std::string(e.what()));
  }

  desc_.model_id = j.value("model_id", std::string("mock"));
  desc_.vocab_size = j.at("vocab_size").get<TokenId>();
  desc_.layer_count = j.value("layer_count", 1);
  desc_.hidden_dim = j.at("hidden_dim").get<int>();
  desc_.max_context = j.value("max_context", 4096);
  desc_.has_bos = true;
  bos_id_ = j.value("bos_id", 0);
  special_ids_.insert(bos_id_);
  if (j.contains("special_ids"))
    for (TokenId id : j["special_ids"]) special_ids_.insert(id);
  if (j.contains("tokens"))
    tokens_ = j["tokens"].get<std::vector<std::string>>();

  for (const auto& rule : j.value("rules", nlohmann::json::array())) {
    auto prefix = rule.at("prefix").get<std::vector<TokenId>>();
    if (prefix.empty())
      throw Error(ErrorCode::InputError, "mock rule with empty prefix");
    if (rule.contains("hidden")) {
      auto h = rule["hidden"].get<std::vector<double>>();
      if (static_cast<int>(h.size()) != desc_.hidden_dim)
        throw Error(ErrorCode::InputError, "mock hidden vector has wrong dim");
      hidden_rules_[prefix] = std::move(h);
    }
    if (rule.contains("logits")) {
      auto l = rule["logits"].get<std::vector<double>>();
      if (static_cast<TokenId>(l.size()) != desc_.vocab_size)
        throw Error(ErrorCode::InputError, "mock logits have wrong length");
      logit_rules_[prefix] = std::move(l);
    } else if (rule.contains("next")) {
      std::vector<double> l(desc_.vocab_size, 0.0);
      l.at(rule["next"].get<TokenId>()) = 1.0;
      logit_rules_[prefix] = std::move(l);
    }
  }
}

std::string MockBackend::token_text(TokenId id) const {
  if (id < 0 || id >= desc_.vocab_size)
    throw Error(ErrorCode::RangeError, "token id out of range");
  if (id < static_cast<TokenId>(tokens_.size())) return tokens_[id];
  return "mock" + std::to_string(id);
}

std::vector<double> MockBackend::state_for_prefix(
    const std::vector<TokenId>& prefix) const {
  auto it = hidden_rules_.find(prefix);
  if (it != hidden_rules_.end()) return it->second;
  // Deterministic non-zero fallback hashed from the prefix.
  std::uint64_t h = 0x9E3779B97F4A7C15ULL;
  for (TokenId id : prefix) h = (h ^ static_cast<std::uint64_t>(id)) * 0x100000001b3ULL;
  Rng rng(h);
  std::vector<double> v(desc_.hidden_dim);
  double norm = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  if (norm == 0.0) {
    v[0] = 1.0;
    norm = 1.0;
  }
  for (auto& x : v) x /= norm;
  return v;
}

ForwardResult MockBackend::forward(const TokenSequence& seq, int layer) const {
  check_sequence(seq, layer);
  ForwardResult out;
  std::vector<TokenId> prefix;
  prefix.reserve(seq.ids.size());
  for (std::size_t p = 0; p < seq.ids.size(); ++p) {
    prefix.push_back(seq.ids[p]);
    out.hidden.push_back(
        HiddenState{state_for_prefix(prefix), layer, static_cast<int>(p)});
  }
  auto it = logit_rules_.find(prefix);
  if (it != logit_rules_.end()) {
    out.logits = it->second;
  } else {
    out.logits.assign(desc_.vocab_size, 0.0);
    out.logits[0] = 1.0;
  }
  return out;
}

}  // namespace assoclab
