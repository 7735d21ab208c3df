#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "dustk/checkpoint.hpp"
#include "dustk/kernels.hpp"

namespace dustk {

// Residual stream snapshots: states[0] is the embedding output and
// states[k] the output of layer k (1-based), so size() == n_layers + 1.
struct HiddenTrace {
  std::vector<Mat> states;
};

struct SequenceLogProb {
  double total = 0.0;
  // per_token[i] = log p(tokens[i + 1] | tokens[0..i])
  std::vector<double> per_token;
};

// Llama-style decoder evaluated directly on a checkpoint's tensors.
class RefModel {
 public:
  static constexpr std::size_t kDefaultMaxSeqLen = 256;

  // Throws ValidationError when the checkpoint violates its schema (and,
  // in strict mode, when any weight is NaN/Inf).
  explicit RefModel(Checkpoint ckpt, std::size_t max_seq_len = kDefaultMaxSeqLen,
                    bool strict = true);

  const ModelConfig& config() const { return ckpt_->config; }
  const Checkpoint& checkpoint() const { return *ckpt_; }
  std::size_t max_seq_len() const { return max_seq_len_; }

  // Logits [tokens.size(), vocab_size].
  Mat forward(std::span<const Token> tokens) const;
  HiddenTrace hidden_states(std::span<const Token> tokens) const;

  // Runs decoder layer `layer` (0-based) over a residual stream whose rows
  // are positions 0..rows-1.
  Mat apply_layer(std::size_t layer, const Mat& x) const;

  SequenceLogProb sequence_logprob(std::span<const Token> tokens) const;

  // Mean of the lowest ceil(k * (L - 1)) per-token log-probs, k in (0, 1].
  double min_k_prob(std::span<const Token> tokens, double k) const;

  // Appends n_new argmax tokens (ties -> lowest id).
  std::vector<Token> greedy_generate(std::span<const Token> prompt,
                                     std::size_t n_new) const;

 private:
  struct LayerRefs {
    std::array<const Tensor*, 9> t{};
  };

  void check_tokens(std::span<const Token> tokens) const;
  Mat embed(std::span<const Token> tokens) const;
  Mat head(const Mat& x) const;

  std::shared_ptr<const Checkpoint> ckpt_;
  std::size_t max_seq_len_;
  std::vector<LayerRefs> layers_;
  const Tensor* embed_ = nullptr;
  const Tensor* final_norm_ = nullptr;
  const Tensor* lm_head_ = nullptr;
};

inline RefModel build_model(Checkpoint ckpt,
                            std::size_t max_seq_len = RefModel::kDefaultMaxSeqLen,
                            bool strict = true) {
  return RefModel(std::move(ckpt), max_seq_len, strict);
}

// Mean of the lowest ceil(k * n) values of per_token (n = per_token.size()).
double min_k_mean(std::span<const double> per_token, double k);

// Row-major [rows, cols] view of a 2-D tensor (1-D tensors map as one row).
ConstMatMap as_mat(const Tensor& t);

}  // namespace dustk
