#include "assoclab/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "assoclab/mock_backend.hpp"
#include "assoclab/real_backend.hpp"
#include "assoclab/stopwords_en.hpp"
#include "assoclab/synthetic_backend.hpp"

namespace assoclab {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw Error(ErrorCode::RangeError, "cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0)
    throw Error(ErrorCode::BackendError, "cosine undefined for zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double PairCosineLoss::value(const ForwardResult& out) const {
  const double s = cosine(out.hidden.at(pos_a_).vector, out.hidden.at(pos_b_).vector);
  const double d = target_ - s;
  return d * d;
}

std::vector<std::vector<double>> PairCosineLoss::hidden_grad(const ForwardResult& out) const {
  const auto& a = out.hidden.at(pos_a_).vector;
  const auto& b = out.hidden.at(pos_b_).vector;
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double norm_a = std::sqrt(na), norm_b = std::sqrt(nb);
  const double s = dot / (norm_a * norm_b);
  const double dl_ds = -2.0 * (target_ - s);

  std::vector<std::vector<double>> grads(out.hidden.size());
  auto& ga = grads[pos_a_];
  auto& gb = grads[pos_b_];
  ga.assign(a.size(), 0.0);
  gb.assign(b.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    // d s / d a_i = b_i/(|a||b|) - s*a_i/|a|^2, symmetric for b.
    ga[i] += dl_ds * (b[i] / (norm_a * norm_b) - s * a[i] / na);
    gb[i] += dl_ds * (a[i] / (norm_a * norm_b) - s * b[i] / nb);
  }
  return grads;
}

std::vector<double> PairCosineLoss::logits_grad(const ForwardResult&) const {
  return {};
}

std::optional<std::string> PairCosineLoss::wire_json() const {
  nlohmann::json j{{"type", "pair_cosine"},
                   {"target", target_},
                   {"pos_a", pos_a_},
                   {"pos_b", pos_b_}};
  return j.dump();
}

void Backend::check_sequence(const TokenSequence& seq, int layer) const {
  const auto& d = descriptor();
  if (seq.ids.empty())
    throw Error(ErrorCode::RangeError, "empty sequence");
  if (layer < 1 || layer > d.layer_count)
    throw Error(ErrorCode::RangeError,
                "layer " + std::to_string(layer) + " outside [1, " +
                    std::to_string(d.layer_count) + "]");
  if (static_cast<int>(seq.ids.size()) > effective_context())
    throw Error(ErrorCode::ContextOverflow,
                "sequence length " + std::to_string(seq.ids.size()) +
                    " exceeds effective context " +
                    std::to_string(effective_context()));
  for (TokenId id : seq.ids) {
    if (id < 0 || id >= d.vocab_size)
      throw Error(ErrorCode::RangeError, "token id " + std::to_string(id) +
                                             " outside vocabulary");
  }
  if (seq.bos_included && seq.ids[0] != bos_id())
    throw Error(ErrorCode::RangeError, "bos_included but position 0 is not BOS");
}

namespace {

std::string trimmed(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string lowered(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool all_punct(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::ispunct(c) != 0;
  });
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isdigit(c) != 0;
  });
}

}  // namespace

std::set<TokenId> Backend::filtered_vocabulary(const VocabularyFilter& filter) const {
  static const std::unordered_set<std::string_view> stopset(kStopwordsEn.begin(),
                                                            kStopwordsEn.end());
  const auto specials = special_ids();
  std::set<TokenId> out;
  for (TokenId id = 0; id < descriptor().vocab_size; ++id) {
    if (specials.count(id)) continue;
    const std::string text = trimmed(token_text(id));
    if (filter.exclude_punctuation && all_punct(text)) continue;
    if (filter.exclude_numerals && all_digits(text)) continue;
    if (filter.exclude_stopwords && stopset.count(lowered(text))) continue;
    out.insert(id);
  }
  if (filter.allowlist_path) {
    std::ifstream in(*filter.allowlist_path);
    if (!in)
      throw Error(ErrorCode::InputError,
                  "allowlist unreadable: " + *filter.allowlist_path);
    std::unordered_set<std::string> allowed;
    std::string line;
    while (std::getline(in, line)) {
      line = trimmed(line);
      if (!line.empty()) allowed.insert(line);
    }
    std::set<TokenId> inter;
    for (TokenId id : out) {
      if (allowed.count(trimmed(token_text(id)))) inter.insert(id);
    }
    out = std::move(inter);
  }
  return out;
}

std::shared_ptr<Backend> make_backend(const std::string& uri) {
  const auto colon = uri.find(':');
  if (colon == std::string::npos)
    throw Error(ErrorCode::InputError, "backend URI missing scheme: " + uri);
  const std::string scheme = uri.substr(0, colon);
  const std::string rest = uri.substr(colon + 1);
  if (scheme == "synthetic") {
    std::vector<std::string> parts;
    std::stringstream ss(rest);
    std::string p;
    while (std::getline(ss, p, ':')) parts.push_back(p);
    if (parts.size() != 4)
      throw Error(ErrorCode::InputError,
                  "expected synthetic:<seed>:<vocab>:<dim>:<layers>, got " + uri);
    return std::make_shared<SyntheticBackend>(
        std::stoull(parts[0]), static_cast<TokenId>(std::stol(parts[1])),
        std::stoi(parts[2]), std::stoi(parts[3]));
  }
  if (scheme == "mock") return std::make_shared<MockBackend>(rest);
  if (scheme == "real") return std::make_shared<RealBackend>(rest);
  throw Error(ErrorCode::InputError, "unknown backend scheme: " + scheme);
}

}  // namespace assoclab
