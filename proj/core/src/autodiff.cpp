#include "dustk/autodiff.hpp"

#include <cmath>
#include <memory>

#include "dustk/errors.hpp"
#include "dustk/refmodel.hpp"

namespace dustk {

const Mat& Var::value() const { return tape->value(*this); }
const Mat& Var::grad() const { return tape->grad(*this); }

Var Tape::leaf(Mat value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return {nodes_.size() - 1, this};
}

const Mat& Tape::grad(Var v) {
  Node& node = nodes_.at(v.id);
  if (!node.has_grad) {
    node.grad = Mat::Zero(node.value.rows(), node.value.cols());
    node.has_grad = true;
  }
  return node.grad;
}

Var Tape::push(Mat value, std::span<const Var> inputs, Backward backward) {
  Node node;
  node.value = std::move(value);
  for (const Var& in : inputs) node.requires_grad |= nodes_.at(in.id).requires_grad;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return {nodes_.size() - 1, this};
}

void Tape::accumulate(Var v, const Mat& g) {
  Node& node = nodes_.at(v.id);
  if (!node.requires_grad) return;
  if (!node.has_grad) {
    node.grad = g;
    node.has_grad = true;
  } else {
    node.grad += g;
  }
}

void Tape::backward(Var loss) {
  Node& root = nodes_.at(loss.id);
  if (root.value.size() != 1) throw ValidationError("backward needs a scalar loss");
  if (!std::isfinite(root.value(0, 0))) throw NumericError("loss is not finite");
  for (auto& node : nodes_) {
    node.has_grad = false;
    node.grad.resize(0, 0);
  }
  if (!root.requires_grad) return;
  root.grad = Mat::Constant(1, 1, 1.0);
  root.has_grad = true;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (node.has_grad && node.backward) node.backward(*this, node.grad);
  }
}

namespace ops {

namespace {

Tape& tape_of(Var a) { return *a.tape; }

void require_scalar(Var a, const char* op) {
  if (a.value().size() != 1) throw ValidationError(std::string(op) + " expects a 1x1 value");
}

}  // namespace

Var linear(Var x, Var w) {
  Tape& t = tape_of(x);
  Mat y = x.value() * w.value().transpose();
  const Var in[] = {x, w};
  return t.push(std::move(y), in, [x, w](Tape& tp, const Mat& g) {
    if (tp.requires_grad(x)) tp.accumulate(x, g * tp.value(w));
    if (tp.requires_grad(w)) tp.accumulate(w, g.transpose() * tp.value(x));
  });
}

Var embedding(Var table, std::span<const Token> ids) {
  Tape& t = tape_of(table);
  const Mat& tab = table.value();
  Mat y(static_cast<Eigen::Index>(ids.size()), tab.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= tab.rows()) {
      throw ValidationError("token id " + std::to_string(ids[i]) + " out of range");
    }
    y.row(static_cast<Eigen::Index>(i)) = tab.row(ids[i]);
  }
  std::vector<Token> saved(ids.begin(), ids.end());
  const Var in[] = {table};
  return t.push(std::move(y), in, [table, saved = std::move(saved)](Tape& tp, const Mat& g) {
    const Mat& tab_v = tp.value(table);
    Mat d = Mat::Zero(tab_v.rows(), tab_v.cols());
    for (std::size_t i = 0; i < saved.size(); ++i) {
      d.row(saved[i]) += g.row(static_cast<Eigen::Index>(i));
    }
    tp.accumulate(table, d);
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a);
  const Var in[] = {a, b};
  return t.push(a.value() + b.value(), in, [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a);
  const Var in[] = {a, b};
  return t.push(a.value().cwiseProduct(b.value()), in, [a, b](Tape& tp, const Mat& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(tp.value(b)));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(tp.value(a)));
  });
}

Var silu(Var x) {
  Tape& t = tape_of(x);
  const Var in[] = {x};
  Mat y = x.value().unaryExpr([](double v) { return v * kernels::sigmoid(v); });
  return t.push(std::move(y), in, [x](Tape& tp, const Mat& g) {
    const Mat d = tp.value(x).unaryExpr([](double v) {
      const double s = kernels::sigmoid(v);
      return s * (1.0 + v * (1.0 - s));
    });
    tp.accumulate(x, g.cwiseProduct(d));
  });
}

Var rmsnorm(Var x, Var weight, double eps) {
  Tape& t = tape_of(x);
  Mat y;
  auto inv_rms = std::make_shared<Vec>();
  kernels::rmsnorm_forward(x.value(), weight.value().row(0), eps, y, *inv_rms);
  const Var in[] = {x, weight};
  return t.push(std::move(y), in, [x, weight, inv_rms](Tape& tp, const Mat& g) {
    Mat dx;
    Eigen::RowVectorXd dw;
    kernels::rmsnorm_backward(tp.value(x), tp.value(weight).row(0), *inv_rms, g, dx, dw);
    tp.accumulate(x, dx);
    tp.accumulate(weight, Mat(dw));
  });
}

Var rope(Var x, const kernels::RopeShape& shape) {
  Tape& t = tape_of(x);
  Mat y = x.value();
  kernels::rope_apply(y, shape);
  const Var in[] = {x};
  return t.push(std::move(y), in, [x, shape](Tape& tp, const Mat& g) {
    Mat d = g;
    kernels::rope_apply(d, shape, /*inverse=*/true);
    tp.accumulate(x, d);
  });
}

Var causal_attention(Var q, Var k, Var v, const kernels::AttentionShape& shape) {
  Tape& t = tape_of(q);
  Mat out;
  auto probs = std::make_shared<std::vector<Mat>>();
  kernels::attention_forward(q.value(), k.value(), v.value(), shape, out, *probs);
  const Var in[] = {q, k, v};
  return t.push(std::move(out), in, [q, k, v, shape, probs](Tape& tp, const Mat& g) {
    Mat dq, dk, dv;
    kernels::attention_backward(tp.value(q), tp.value(k), tp.value(v), shape, *probs, g,
                                dq, dk, dv);
    tp.accumulate(q, dq);
    tp.accumulate(k, dk);
    tp.accumulate(v, dv);
  });
}

Var next_token_nll(Var logits, std::span<const Token> tokens, std::size_t seq_len) {
  Tape& t = tape_of(logits);
  const Mat& z = logits.value();
  if (seq_len < 2) throw ValidationError("next-token loss needs seq_len >= 2");
  if (static_cast<std::size_t>(z.rows()) != tokens.size() || tokens.size() % seq_len != 0) {
    throw ValidationError("logits rows must equal token count, a multiple of seq_len");
  }
  for (Token tok : tokens) {
    if (tok < 0 || tok >= z.cols()) throw ValidationError("target id out of range");
  }
  auto logp = std::make_shared<Mat>(kernels::log_softmax_rows(z));
  const std::size_t count = tokens.size() / seq_len * (seq_len - 1);
  double total = 0.0;
  for (std::size_t r = 0; r < tokens.size(); ++r) {
    if ((r + 1) % seq_len == 0) continue;
    total -= (*logp)(static_cast<Eigen::Index>(r), tokens[r + 1]);
  }
  std::vector<Token> saved(tokens.begin(), tokens.end());
  const Var in[] = {logits};
  return t.push(Mat::Constant(1, 1, total / static_cast<double>(count)), in,
                [logits, logp, saved = std::move(saved), seq_len, count](Tape& tp,
                                                                          const Mat& g) {
                  const double s = g(0, 0) / static_cast<double>(count);
                  Mat d = logp->array().exp() * s;
                  for (std::size_t r = 0; r < saved.size(); ++r) {
                    const auto row = static_cast<Eigen::Index>(r);
                    if ((r + 1) % seq_len == 0) {
                      d.row(row).setZero();
                    } else {
                      d(row, saved[r + 1]) -= s;
                    }
                  }
                  tp.accumulate(logits, d);
                });
}

Var span_logprob(Var logits, std::span<const Token> tokens, std::size_t from) {
  Tape& t = tape_of(logits);
  const Mat& z = logits.value();
  if (from < 1 || from > tokens.size()) throw ValidationError("span start out of range");
  if (static_cast<std::size_t>(z.rows()) != tokens.size()) {
    throw ValidationError("logits rows must equal token count");
  }
  auto logp = std::make_shared<Mat>(kernels::log_softmax_rows(z));
  double total = 0.0;
  for (std::size_t i = from; i < tokens.size(); ++i) {
    if (tokens[i] < 0 || tokens[i] >= z.cols()) throw ValidationError("token id out of range");
    total += (*logp)(static_cast<Eigen::Index>(i - 1), tokens[i]);
  }
  std::vector<Token> saved(tokens.begin(), tokens.end());
  const Var in[] = {logits};
  return t.push(Mat::Constant(1, 1, total), in,
                [logits, logp, saved = std::move(saved), from](Tape& tp, const Mat& g) {
                  const double s = g(0, 0);
                  Mat d = Mat::Zero(logp->rows(), logp->cols());
                  for (std::size_t i = from; i < saved.size(); ++i) {
                    const auto row = static_cast<Eigen::Index>(i - 1);
                    d.row(row) = logp->row(row).array().exp() * -s;
                    d(row, saved[i]) += s;
                  }
                  tp.accumulate(logits, d);
                });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a);
  const Var in[] = {a, b};
  return t.push(a.value() - b.value(), in, [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var scale(Var a, double c) {
  Tape& t = tape_of(a);
  const Var in[] = {a};
  return t.push(a.value() * c, in, [a, c](Tape& tp, const Mat& g) { tp.accumulate(a, g * c); });
}

Var add_scalar(Var a, double c) {
  Tape& t = tape_of(a);
  const Var in[] = {a};
  return t.push(a.value().array() + c, in, [a](Tape& tp, const Mat& g) { tp.accumulate(a, g); });
}

Var neg_log_sigmoid(Var x) {
  Tape& t = tape_of(x);
  const Var in[] = {x};
  Mat y = x.value().unaryExpr([](double v) { return kernels::softplus(-v); });
  return t.push(std::move(y), in, [x](Tape& tp, const Mat& g) {
    const Mat d = tp.value(x).unaryExpr([](double v) { return -kernels::sigmoid(-v); });
    tp.accumulate(x, g.cwiseProduct(d));
  });
}

Var mean(std::span<const Var> scalars) {
  if (scalars.empty()) throw ValidationError("mean of an empty list");
  Tape& t = tape_of(scalars.front());
  double total = 0.0;
  for (const Var& s : scalars) {
    require_scalar(s, "mean");
    total += s.value()(0, 0);
  }
  const auto n = static_cast<double>(scalars.size());
  std::vector<Var> saved(scalars.begin(), scalars.end());
  return t.push(Mat::Constant(1, 1, total / n), scalars, [saved, n](Tape& tp, const Mat& g) {
    const Mat d = g / n;
    for (const Var& s : saved) tp.accumulate(s, d);
  });
}

Var sum_squares(Var x) {
  Tape& t = tape_of(x);
  const Var in[] = {x};
  return t.push(Mat::Constant(1, 1, x.value().squaredNorm()), in, [x](Tape& tp, const Mat& g) {
    tp.accumulate(x, tp.value(x) * (2.0 * g(0, 0)));
  });
}

}  // namespace ops

const Var& ParamBinding::operator[](std::string_view name) const {
  const auto it = vars.find(name);
  if (it == vars.end()) throw ValidationError("unbound parameter: " + std::string(name));
  return it->second;
}

ParamBinding bind_params(Tape& tape, const Checkpoint& ckpt, bool requires_grad) {
  ParamBinding out;
  for (const auto& [name, tensor] : ckpt.tensors) {
    out.vars.emplace(name, tape.leaf(Mat(as_mat(tensor)), requires_grad));
  }
  return out;
}

Var lm_logits(Tape& tape, const ParamBinding& p, const ModelConfig& c,
              std::span<const Token> tokens, std::size_t seq_len) {
  if (seq_len == 0 || tokens.size() % seq_len != 0) {
    throw ValidationError("token count must be a positive multiple of seq_len");
  }
  (void)tape;
  const kernels::RopeShape q_rope{seq_len, c.n_heads, c.head_dim(), c.rope_theta};
  const kernels::RopeShape k_rope{seq_len, c.n_kv_heads, c.head_dim(), c.rope_theta};
  const kernels::AttentionShape attn{seq_len, c.n_heads, c.n_kv_heads, c.head_dim()};

  Var x = ops::embedding(p[names::kEmbed], tokens);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    auto w = [&](std::string_view suffix) { return p[names::layer_tensor(l, suffix)]; };
    Var h = ops::rmsnorm(x, w("input_layernorm.weight"), c.norm_eps);
    Var q = ops::rope(ops::linear(h, w("self_attn.q_proj.weight")), q_rope);
    Var k = ops::rope(ops::linear(h, w("self_attn.k_proj.weight")), k_rope);
    Var v = ops::linear(h, w("self_attn.v_proj.weight"));
    Var a = ops::causal_attention(q, k, v, attn);
    x = ops::add(x, ops::linear(a, w("self_attn.o_proj.weight")));
    Var h2 = ops::rmsnorm(x, w("post_attention_layernorm.weight"), c.norm_eps);
    Var gate = ops::silu(ops::linear(h2, w("mlp.gate_proj.weight")));
    Var up = ops::linear(h2, w("mlp.up_proj.weight"));
    x = ops::add(x, ops::linear(ops::mul(gate, up), w("mlp.down_proj.weight")));
  }
  Var h = ops::rmsnorm(x, p[names::kFinalNorm], c.norm_eps);
  return ops::linear(h, c.tied_embeddings ? p[names::kEmbed] : p[names::kLmHead]);
}

GradMap backward(Tape& tape, Var loss, const ParamBinding& params, const Checkpoint& shapes) {
  if (loss.value().size() != 1 || !std::isfinite(loss.value()(0, 0))) {
    throw NumericError("loss is not finite");
  }
  tape.backward(loss);
  GradMap out;
  for (const auto& [name, var] : params.vars) {
    const Mat& g = tape.grad(var);
    Tensor t;
    t.shape = shapes.at(name).shape;
    t.data.assign(g.data(), g.data() + g.size());
    out.emplace(name, std::move(t));
  }
  return out;
}

}  // namespace dustk
