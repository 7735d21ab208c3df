#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace dustk {

// Llama-style decoder hyperparameters.
struct ModelConfig {
  std::size_t n_layers = 0;
  std::size_t d_model = 0;
  std::size_t n_heads = 0;
  std::size_t n_kv_heads = 0;
  std::size_t d_ff = 0;
  std::size_t vocab_size = 0;
  double rope_theta = 10000.0;
  double norm_eps = 1e-5;
  bool tied_embeddings = false;

  std::size_t head_dim() const { return n_heads == 0 ? 0 : d_model / n_heads; }
  std::size_t kv_dim() const { return head_dim() * n_kv_heads; }

  bool operator==(const ModelConfig&) const = default;
};

// Human-readable list of invariant violations; empty when the config is usable.
std::vector<std::string> config_problems(const ModelConfig& config);

nlohmann::json config_to_json(const ModelConfig& config);
// Requires exactly the ModelConfig fields; throws FormatError otherwise.
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace dustk
