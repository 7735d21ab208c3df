#include "dustk/checkpoint.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "dustk/errors.hpp"

namespace dustk {

namespace names {

std::string layer_prefix(std::size_t layer) {
  return "model.layers." + std::to_string(layer) + ".";
}

std::string layer_tensor(std::size_t layer, std::string_view suffix) {
  return layer_prefix(layer) + std::string(suffix);
}

bool split_layer_name(std::string_view name, std::size_t& layer,
                      std::string& suffix) {
  constexpr std::string_view kPrefix = "model.layers.";
  if (!name.starts_with(kPrefix)) return false;
  name.remove_prefix(kPrefix.size());
  const auto dot = name.find('.');
  if (dot == std::string_view::npos || dot == 0) return false;
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(name.data(), name.data() + dot, value);
  if (ec != std::errc() || ptr != name.data() + dot) return false;
  // Reject leading zeros so the mapping name <-> index stays one-to-one.
  if (dot > 1 && name.front() == '0') return false;
  layer = value;
  suffix = std::string(name.substr(dot + 1));
  return true;
}

}  // namespace names

std::vector<std::size_t> layer_tensor_shape(const ModelConfig& c,
                                            std::string_view suffix) {
  const std::size_t d = c.d_model;
  if (suffix == "self_attn.q_proj.weight") return {c.n_heads * c.head_dim(), d};
  if (suffix == "self_attn.k_proj.weight") return {c.kv_dim(), d};
  if (suffix == "self_attn.v_proj.weight") return {c.kv_dim(), d};
  if (suffix == "self_attn.o_proj.weight") return {d, c.n_heads * c.head_dim()};
  if (suffix == "mlp.gate_proj.weight") return {c.d_ff, d};
  if (suffix == "mlp.up_proj.weight") return {c.d_ff, d};
  if (suffix == "mlp.down_proj.weight") return {d, c.d_ff};
  if (suffix == "input_layernorm.weight") return {d};
  if (suffix == "post_attention_layernorm.weight") return {d};
  throw ValidationError("unknown layer tensor suffix: " + std::string(suffix));
}

std::size_t params_per_layer(const ModelConfig& c) {
  std::size_t total = 0;
  for (auto suffix : names::kLayerSuffixes) {
    total += shape_numel(layer_tensor_shape(c, suffix));
  }
  return total;
}

std::vector<TensorSpec> expected_schema(const ModelConfig& c) {
  std::vector<TensorSpec> out;
  out.push_back({std::string(names::kEmbed), {c.vocab_size, c.d_model}});
  out.push_back({std::string(names::kFinalNorm), {c.d_model}});
  if (!c.tied_embeddings) {
    out.push_back({std::string(names::kLmHead), {c.vocab_size, c.d_model}});
  }
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    for (auto suffix : names::kLayerSuffixes) {
      out.push_back({names::layer_tensor(i, suffix), layer_tensor_shape(c, suffix)});
    }
  }
  std::sort(out.begin(), out.end(),
            [](const TensorSpec& a, const TensorSpec& b) { return a.name < b.name; });
  return out;
}

const Tensor& Checkpoint::at(std::string_view name) const {
  const auto it = tensors.find(name);
  if (it == tensors.end()) {
    throw ValidationError("missing tensor: " + std::string(name));
  }
  return it->second;
}

Tensor& Checkpoint::at(std::string_view name) {
  const auto it = tensors.find(name);
  if (it == tensors.end()) {
    throw ValidationError("missing tensor: " + std::string(name));
  }
  return it->second;
}

bool bitwise_equal(const Checkpoint& a, const Checkpoint& b) {
  if (!(a.config == b.config) || a.dtype != b.dtype ||
      a.tensors.size() != b.tensors.size()) {
    return false;
  }
  auto ia = a.tensors.begin();
  auto ib = b.tensors.begin();
  for (; ia != a.tensors.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !bitwise_equal(ia->second, ib->second)) {
      return false;
    }
  }
  return true;
}

const char* violation_kind_name(Violation::Kind kind) {
  switch (kind) {
    case Violation::Kind::kConfig: return "config";
    case Violation::Kind::kMissing: return "missing";
    case Violation::Kind::kUnexpected: return "unexpected";
    case Violation::Kind::kShape: return "shape";
    case Violation::Kind::kDataSize: return "data-size";
    case Violation::Kind::kNonFinite: return "non-finite";
  }
  return "unknown";
}

namespace {

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

}  // namespace

std::vector<Violation> validate(const Checkpoint& ckpt, ValidateOptions options) {
  std::vector<Violation> out;
  const auto problems = config_problems(ckpt.config);
  for (const auto& p : problems) {
    out.push_back({Violation::Kind::kConfig, "", p});
  }

  std::set<std::string, std::less<>> expected_names;
  if (problems.empty()) {
    for (const auto& spec : expected_schema(ckpt.config)) {
      expected_names.insert(spec.name);
      const auto it = ckpt.tensors.find(spec.name);
      if (it == ckpt.tensors.end()) {
        out.push_back({Violation::Kind::kMissing, spec.name,
                       "missing tensor " + spec.name});
        continue;
      }
      if (it->second.shape != spec.shape) {
        out.push_back({Violation::Kind::kShape, spec.name,
                       spec.name + " has shape " + shape_str(it->second.shape) +
                           ", expected " + shape_str(spec.shape)});
      }
    }
  }

  for (const auto& [name, tensor] : ckpt.tensors) {
    if (problems.empty() && !expected_names.contains(name)) {
      out.push_back({Violation::Kind::kUnexpected, name,
                     "unexpected tensor " + name});
    }
    if (shape_numel(tensor.shape) != tensor.data.size()) {
      out.push_back({Violation::Kind::kDataSize, name,
                     name + " holds " + std::to_string(tensor.data.size()) +
                         " values for shape " + shape_str(tensor.shape)});
    }
    if (options.check_finite &&
        !std::all_of(tensor.data.begin(), tensor.data.end(),
                     [](double v) { return std::isfinite(v); })) {
      out.push_back({Violation::Kind::kNonFinite, name,
                     name + " contains NaN or Inf"});
    }
  }
  return out;
}

void require_valid(const Checkpoint& ckpt, ValidateOptions options) {
  const auto violations = validate(ckpt, options);
  if (violations.empty()) return;
  std::string msg = "invalid checkpoint:";
  for (const auto& v : violations) msg += "\n  " + v.message;
  throw ValidationError(msg);
}

std::size_t count_params(const Checkpoint& ckpt) {
  std::size_t total = 0;
  for (const auto& [name, tensor] : ckpt.tensors) {
    if (ckpt.config.tied_embeddings && name == names::kLmHead) continue;
    total += shape_numel(tensor.shape);
  }
  return total;
}

}  // namespace dustk
