#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dustk/checkpoint.hpp"
#include "dustk/kernels.hpp"

namespace dustk {

class Tape;

// Handle to a node on a Tape.
struct Var {
  std::size_t id = 0;
  Tape* tape = nullptr;

  const Mat& value() const;
  const Mat& grad() const;
};

// Reverse-mode tape. Nodes are appended in evaluation order; backward()
// replays their vector-Jacobian products in reverse. A tape is single-use
// and not thread-safe; build a fresh one per step.
class Tape {
 public:
  Var leaf(Mat value, bool requires_grad = true);
  Var constant(Mat value) { return leaf(std::move(value), false); }

  const Mat& value(Var v) const { return nodes_.at(v.id).value; }
  // Zero matrix of the node's shape if no gradient reached it.
  const Mat& grad(Var v);
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  // Seeds d(loss)/d(loss) = 1; loss must be 1x1 and finite.
  void backward(Var loss);

  // Used by op implementations.
  using Backward = std::function<void(Tape&, const Mat& grad_out)>;
  Var push(Mat value, std::span<const Var> inputs, Backward backward);
  void accumulate(Var v, const Mat& g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

namespace ops {

// x [r, in] times w [out, in] transposed -> [r, out]
Var linear(Var x, Var w);
// Rows of table [V, d] selected by ids.
Var embedding(Var table, std::span<const Token> ids);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var silu(Var x);
// weight is [1, d]
Var rmsnorm(Var x, Var weight, double eps);
Var rope(Var x, const kernels::RopeShape& shape);
Var causal_attention(Var q, Var k, Var v, const kernels::AttentionShape& shape);

// Mean over sequences and positions of -log softmax(logits[i-1])[tokens[i]];
// logits/tokens hold whole sequences of seq_len back to back.
Var next_token_nll(Var logits, std::span<const Token> tokens, std::size_t seq_len);
// Sum of log p(tokens[i] | tokens[<i]) over i in [from, tokens.size()) for a
// single sequence; from >= 1.
Var span_logprob(Var logits, std::span<const Token> tokens, std::size_t from);

// Scalar (1x1) helpers.
Var sub(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
// -log(sigmoid(x)) elementwise.
Var neg_log_sigmoid(Var x);
Var mean(std::span<const Var> scalars);
Var sum_squares(Var x);

}  // namespace ops

// Checkpoint tensors bound as tape leaves (1-D tensors as [1, d]).
struct ParamBinding {
  std::map<std::string, Var, std::less<>> vars;
  const Var& operator[](std::string_view name) const;
};

ParamBinding bind_params(Tape& tape, const Checkpoint& ckpt, bool requires_grad = true);

// Decoder forward on the tape. tokens holds tokens.size() / seq_len
// sequences back to back; returns logits [tokens.size(), vocab].
Var lm_logits(Tape& tape, const ParamBinding& params, const ModelConfig& config,
              std::span<const Token> tokens, std::size_t seq_len);

using GradMap = std::map<std::string, Tensor, std::less<>>;

// Runs tape.backward(loss) and returns d(loss)/d(tensor) for every bound
// parameter, shaped like the checkpoint tensor. Throws NumericError on a
// non-finite loss.
GradMap backward(Tape& tape, Var loss, const ParamBinding& params,
                 const Checkpoint& shapes);

}  // namespace dustk
