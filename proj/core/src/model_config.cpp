#include "dustk/model_config.hpp"

#include <cmath>
#include <set>

#include "dustk/errors.hpp"

namespace dustk {

std::vector<std::string> config_problems(const ModelConfig& c) {
  std::vector<std::string> out;
  auto positive = [&](std::size_t v, const char* field) {
    if (v < 1) out.push_back(std::string(field) + " must be >= 1");
  };
  positive(c.n_layers, "n_layers");
  positive(c.d_model, "d_model");
  positive(c.n_heads, "n_heads");
  positive(c.n_kv_heads, "n_kv_heads");
  positive(c.d_ff, "d_ff");
  positive(c.vocab_size, "vocab_size");
  if (c.n_heads > 0 && c.d_model % c.n_heads != 0) {
    out.push_back("d_model must be divisible by n_heads");
  }
  if (c.n_kv_heads > 0 && c.n_heads % c.n_kv_heads != 0) {
    out.push_back("n_heads must be divisible by n_kv_heads");
  }
  if (c.n_heads > 0 && c.d_model % c.n_heads == 0 && c.head_dim() % 2 != 0) {
    out.push_back("head dimension must be even for rotary embedding");
  }
  if (!(std::isfinite(c.rope_theta) && c.rope_theta > 0.0)) {
    out.push_back("rope_theta must be positive");
  }
  if (!(std::isfinite(c.norm_eps) && c.norm_eps > 0.0)) {
    out.push_back("norm_eps must be positive");
  }
  return out;
}

nlohmann::json config_to_json(const ModelConfig& c) {
  return nlohmann::json{
      {"n_layers", c.n_layers},   {"d_model", c.d_model},
      {"n_heads", c.n_heads},     {"n_kv_heads", c.n_kv_heads},
      {"d_ff", c.d_ff},           {"vocab_size", c.vocab_size},
      {"rope_theta", c.rope_theta}, {"norm_eps", c.norm_eps},
      {"tied_embeddings", c.tied_embeddings},
  };
}

namespace {

std::size_t read_count(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number_unsigned()) {
    throw FormatError(std::string("config field ") + key +
                      " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

double read_real(const nlohmann::json& j, const char* key) {
  const auto& v = j.at(key);
  if (!v.is_number()) {
    throw FormatError(std::string("config field ") + key + " must be a number");
  }
  return v.get<double>();
}

}  // namespace

ModelConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kFields = {
      "n_layers", "d_model",    "n_heads",  "n_kv_heads",     "d_ff",
      "vocab_size", "rope_theta", "norm_eps", "tied_embeddings"};
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kFields.contains(key)) throw FormatError("unknown config field: " + key);
  }
  for (const auto& key : kFields) {
    if (!j.contains(key)) throw FormatError("missing config field: " + key);
  }
  ModelConfig c;
  c.n_layers = read_count(j, "n_layers");
  c.d_model = read_count(j, "d_model");
  c.n_heads = read_count(j, "n_heads");
  c.n_kv_heads = read_count(j, "n_kv_heads");
  c.d_ff = read_count(j, "d_ff");
  c.vocab_size = read_count(j, "vocab_size");
  c.rope_theta = read_real(j, "rope_theta");
  c.norm_eps = read_real(j, "norm_eps");
  if (!j.at("tied_embeddings").is_boolean()) {
    throw FormatError("config field tied_embeddings must be a boolean");
  }
  c.tied_embeddings = j.at("tied_embeddings").get<bool>();
  return c;
}

}  // namespace dustk
