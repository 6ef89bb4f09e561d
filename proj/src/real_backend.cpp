#include "assoclab/real_backend.hpp"

#include <cstdlib>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace assoclab {

namespace {

std::pair<std::string, int> parse_base_url(const std::string& url) {
  std::string rest = url;
  const std::string http = "http://";
  if (rest.rfind(http, 0) == 0) rest = rest.substr(http.size());
  while (!rest.empty() && rest.back() == '/') rest.pop_back();
  const auto colon = rest.find(':');
  if (colon == std::string::npos) return {rest, 80};
  return {rest.substr(0, colon), std::stoi(rest.substr(colon + 1))};
}

std::string default_base_url() {
  if (const char* env = std::getenv("ASSOCLAB_BACKEND_URL")) return env;
  return "http://127.0.0.1:8631";
}

}  // namespace

RealBackend::RealBackend(const std::string& model_id)
    : RealBackend(model_id, default_base_url()) {}

RealBackend::RealBackend(const std::string& model_id, const std::string& base_url)
    : model_id_(model_id) {
  std::tie(host_, port_) = parse_base_url(base_url);

  nlohmann::json req{{"model_id", model_id_}};
  const auto body = nlohmann::json::parse(post_json("/v1/descriptor", req.dump()));
  desc_.model_id = model_id_;
  desc_.vocab_size = body.at("vocab_size").get<TokenId>();
  desc_.layer_count = body.at("layer_count").get<int>();
  desc_.max_context = body.at("max_context").get<int>();
  desc_.hidden_dim = body.at("hidden_dim").get<int>();
  desc_.has_bos = body.value("has_bos", true);
  bos_id_ = body.at("bos_id").get<TokenId>();
  for (TokenId id : body.value("special_ids", std::vector<TokenId>{}))
    special_ids_.insert(id);
  special_ids_.insert(bos_id_);
  revision_ = body.value("revision", std::string());
}

std::string RealBackend::post_json(const std::string& path,
                                   const std::string& body) const {
  httplib::Client client(host_, port_);
  client.set_read_timeout(600, 0);
  auto res = client.Post(path, body, "application/json");
  if (!res)
    throw Error(ErrorCode::BackendError,
                "backend server unreachable at " + host_ + ":" +
                    std::to_string(port_));
  if (res->status != 200)
    throw Error(ErrorCode::BackendError, "backend server returned status " +
                                             std::to_string(res->status) + ": " +
                                             res->body);
  return res->body;
}

std::string RealBackend::token_text(TokenId id) const {
  if (id < 0 || id >= desc_.vocab_size)
    throw Error(ErrorCode::RangeError, "token id out of range");
  nlohmann::json req{{"model_id", model_id_}, {"ids", std::vector<TokenId>{id}}};
  const auto body = nlohmann::json::parse(post_json("/v1/token_text", req.dump()));
  return body.at("texts").at(0).get<std::string>();
}

ForwardResult RealBackend::forward(const TokenSequence& seq, int layer) const {
  check_sequence(seq, layer);
  nlohmann::json req{{"model_id", model_id_}, {"ids", seq.ids}, {"layer", layer}};
  const auto body = nlohmann::json::parse(post_json("/v1/forward", req.dump()));
  ForwardResult out;
  const auto& hidden = body.at("hidden");
  for (std::size_t p = 0; p < hidden.size(); ++p)
    out.hidden.push_back(HiddenState{hidden[p].get<std::vector<double>>(), layer,
                                     static_cast<int>(p)});
  out.logits = body.at("logits").get<std::vector<double>>();
  if (static_cast<TokenId>(out.logits.size()) != desc_.vocab_size)
    throw Error(ErrorCode::BackendError, "server logits length mismatch");
  return out;
}

std::vector<double> RealBackend::input_gradient(const TokenSequence& seq,
                                                int position,
                                                const DifferentiableLoss& loss,
                                                int layer) const {
  check_sequence(seq, layer);
  const auto wire = loss.wire_json();
  if (!wire)
    throw Error(ErrorCode::CapabilityError,
                "loss is not serializable for a remote backend");
  nlohmann::json req{{"model_id", model_id_},
                     {"ids", seq.ids},
                     {"position", position},
                     {"layer", layer},
                     {"loss", nlohmann::json::parse(*wire)}};
  const auto body =
      nlohmann::json::parse(post_json("/v1/input_gradient", req.dump()));
  auto grad = body.at("grad").get<std::vector<double>>();
  if (static_cast<TokenId>(grad.size()) != desc_.vocab_size)
    throw Error(ErrorCode::BackendError, "server gradient length mismatch");
  return grad;
}

}  // namespace assoclab
