#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "dustk/model_config.hpp"
#include "dustk/tensor.hpp"

namespace dustk {

// Canonical Llama-style tensor names.
namespace names {
inline constexpr std::string_view kEmbed = "model.embed_tokens.weight";
inline constexpr std::string_view kFinalNorm = "model.norm.weight";
inline constexpr std::string_view kLmHead = "lm_head.weight";

// Suffixes of the nine tensors each decoder layer owns.
inline constexpr std::string_view kLayerSuffixes[] = {
    "self_attn.q_proj.weight",  "self_attn.k_proj.weight",
    "self_attn.v_proj.weight",  "self_attn.o_proj.weight",
    "mlp.gate_proj.weight",     "mlp.up_proj.weight",
    "mlp.down_proj.weight",     "input_layernorm.weight",
    "post_attention_layernorm.weight",
};

std::string layer_prefix(std::size_t layer);
std::string layer_tensor(std::size_t layer, std::string_view suffix);

// Parses "model.layers.{i}.<suffix>" into (i, suffix). Returns false for
// names outside the layer stack.
bool split_layer_name(std::string_view name, std::size_t& layer,
                      std::string& suffix);
}  // namespace names

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
};

// Every tensor the config requires, in ascending name order.
std::vector<TensorSpec> expected_schema(const ModelConfig& config);
// Shape of one per-layer tensor.
std::vector<std::size_t> layer_tensor_shape(const ModelConfig& config,
                                            std::string_view suffix);
std::size_t params_per_layer(const ModelConfig& config);

struct Checkpoint {
  ModelConfig config;
  DType dtype = DType::kFloat32;
  std::map<std::string, Tensor, std::less<>> tensors;

  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  bool contains(std::string_view name) const {
    return tensors.find(name) != tensors.end();
  }

  bool operator==(const Checkpoint&) const = default;
};

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b);

struct Violation {
  enum class Kind { kConfig, kMissing, kUnexpected, kShape, kDataSize, kNonFinite };
  Kind kind;
  std::string tensor;  // empty for config-level problems
  std::string message;
};

const char* violation_kind_name(Violation::Kind kind);

struct ValidateOptions {
  bool check_finite = true;
};

// Enumerates every schema violation. An empty result means the checkpoint
// satisfies its config.
std::vector<Violation> validate(const Checkpoint& ckpt,
                                ValidateOptions options = {});

// Throws ValidationError listing the violations, if any.
void require_valid(const Checkpoint& ckpt, ValidateOptions options = {});

// Sum of element counts over stored tensors. Tied checkpoints carry no
// lm_head tensor, so the shared matrix is counted once.
std::size_t count_params(const Checkpoint& ckpt);

}  // namespace dustk
