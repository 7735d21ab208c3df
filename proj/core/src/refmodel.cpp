#include "dustk/refmodel.hpp"

#include <algorithm>
#include <cmath>

#include "dustk/errors.hpp"

namespace dustk {

namespace {

enum LayerSlot { kQ, kK, kV, kO, kGate, kUp, kDown, kInNorm, kPostNorm };

Eigen::Map<const Eigen::RowVectorXd> as_row(const Tensor& t) {
  return {t.data.data(), static_cast<Eigen::Index>(t.data.size())};
}

}  // namespace

ConstMatMap as_mat(const Tensor& t) {
  return {t.data.data(), static_cast<Eigen::Index>(t.rows()),
          static_cast<Eigen::Index>(t.cols())};
}

RefModel::RefModel(Checkpoint ckpt, std::size_t max_seq_len, bool strict)
    : ckpt_(std::make_shared<const Checkpoint>(std::move(ckpt))),
      max_seq_len_(max_seq_len) {
  require_valid(*ckpt_, {.check_finite = strict});
  if (max_seq_len_ == 0) throw ValidationError("max_seq_len must be >= 1");
  const auto& c = ckpt_->config;
  layers_.resize(c.n_layers);
  for (std::size_t i = 0; i < c.n_layers; ++i) {
    for (std::size_t s = 0; s < 9; ++s) {
      layers_[i].t[s] = &ckpt_->at(names::layer_tensor(i, names::kLayerSuffixes[s]));
    }
  }
  embed_ = &ckpt_->at(names::kEmbed);
  final_norm_ = &ckpt_->at(names::kFinalNorm);
  lm_head_ = c.tied_embeddings ? embed_ : &ckpt_->at(names::kLmHead);
}

void RefModel::check_tokens(std::span<const Token> tokens) const {
  if (tokens.empty()) throw ValidationError("token sequence is empty");
  if (tokens.size() > max_seq_len_) {
    throw ValidationError("sequence length " + std::to_string(tokens.size()) +
                          " exceeds max_seq_len " + std::to_string(max_seq_len_));
  }
  for (Token t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= config().vocab_size) {
      throw ValidationError("token id " + std::to_string(t) + " out of range");
    }
  }
}

Mat RefModel::embed(std::span<const Token> tokens) const {
  const auto table = as_mat(*embed_);
  Mat x(static_cast<Eigen::Index>(tokens.size()), table.cols());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = table.row(tokens[i]);
  }
  return x;
}

Mat RefModel::apply_layer(std::size_t layer, const Mat& x) const {
  const auto& c = config();
  const auto& w = layers_.at(layer).t;
  Mat h;
  Vec inv_rms;
  kernels::rmsnorm_forward(x, as_row(*w[kInNorm]), c.norm_eps, h, inv_rms);
  Mat q = h * as_mat(*w[kQ]).transpose();
  Mat k = h * as_mat(*w[kK]).transpose();
  const Mat v = h * as_mat(*w[kV]).transpose();
  const kernels::RopeShape q_shape{static_cast<std::size_t>(x.rows()), c.n_heads,
                                   c.head_dim(), c.rope_theta};
  kernels::RopeShape k_shape = q_shape;
  k_shape.n_heads = c.n_kv_heads;
  kernels::rope_apply(q, q_shape);
  kernels::rope_apply(k, k_shape);
  Mat attn;
  std::vector<Mat> probs;
  kernels::attention_forward(
      q, k, v, {static_cast<std::size_t>(x.rows()), c.n_heads, c.n_kv_heads, c.head_dim()},
      attn, probs);
  Mat out = x + attn * as_mat(*w[kO]).transpose();

  kernels::rmsnorm_forward(out, as_row(*w[kPostNorm]), c.norm_eps, h, inv_rms);
  const Mat gate = h * as_mat(*w[kGate]).transpose();
  const Mat up = h * as_mat(*w[kUp]).transpose();
  const Mat act = gate.unaryExpr([](double g) { return g * kernels::sigmoid(g); })
                      .cwiseProduct(up);
  out += act * as_mat(*w[kDown]).transpose();
  return out;
}

Mat RefModel::head(const Mat& x) const {
  Mat h;
  Vec inv_rms;
  kernels::rmsnorm_forward(x, as_row(*final_norm_), config().norm_eps, h, inv_rms);
  return h * as_mat(*lm_head_).transpose();
}

Mat RefModel::forward(std::span<const Token> tokens) const {
  check_tokens(tokens);
  Mat x = embed(tokens);
  for (std::size_t l = 0; l < layers_.size(); ++l) x = apply_layer(l, x);
  return head(x);
}

HiddenTrace RefModel::hidden_states(std::span<const Token> tokens) const {
  check_tokens(tokens);
  HiddenTrace trace;
  trace.states.reserve(layers_.size() + 1);
  trace.states.push_back(embed(tokens));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    trace.states.push_back(apply_layer(l, trace.states.back()));
  }
  return trace;
}

SequenceLogProb RefModel::sequence_logprob(std::span<const Token> tokens) const {
  if (tokens.size() < 2) throw ValidationError("log-prob needs at least 2 tokens");
  const Mat logp = kernels::log_softmax_rows(forward(tokens));
  SequenceLogProb out;
  out.per_token.reserve(tokens.size() - 1);
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const double lp = logp(static_cast<Eigen::Index>(i - 1), tokens[i]);
    out.per_token.push_back(lp);
    out.total += lp;
  }
  return out;
}

double min_k_mean(std::span<const double> per_token, double k) {
  if (!(k > 0.0 && k <= 1.0)) throw ValidationError("min-k fraction must lie in (0, 1]");
  if (per_token.empty()) throw ValidationError("min-k needs at least one value");
  const double raw = k * static_cast<double>(per_token.size());
  // Absorb representation error such as 0.3 * 10 = 3.0000000000000004.
  auto count = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  count = std::clamp<std::size_t>(count, 1, per_token.size());
  std::vector<double> sorted(per_token.begin(), per_token.end());
  std::partial_sort(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(count),
                    sorted.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) sum += sorted[i];
  return sum / static_cast<double>(count);
}

double RefModel::min_k_prob(std::span<const Token> tokens, double k) const {
  if (!(k > 0.0 && k <= 1.0)) throw ValidationError("min-k fraction must lie in (0, 1]");
  return min_k_mean(sequence_logprob(tokens).per_token, k);
}

std::vector<Token> RefModel::greedy_generate(std::span<const Token> prompt,
                                             std::size_t n_new) const {
  if (prompt.empty()) throw ValidationError("prompt is empty");
  if (prompt.size() + n_new > max_seq_len_) {
    throw ValidationError("prompt length + n_new exceeds max_seq_len");
  }
  std::vector<Token> seq(prompt.begin(), prompt.end());
  for (std::size_t step = 0; step < n_new; ++step) {
    const Mat logits = forward(seq);
    const auto last = logits.row(logits.rows() - 1);
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < last.size(); ++j) {
      if (last(j) > last(best)) best = j;
    }
    seq.push_back(static_cast<Token>(best));
  }
  return seq;
}

}  // namespace dustk
