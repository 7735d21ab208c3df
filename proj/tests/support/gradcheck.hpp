#pragma once

#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dustk/autodiff.hpp"
#include "dustk/refmodel.hpp"
#include "finite_diff.hpp"

namespace dustk::testing {

inline Mat random_mat(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

using OpBuilder = std::function<Var(Tape&, std::span<const Var>)>;

// Relative gradient error of every input of `op`. The op output is reduced
// to a scalar as sum((out + R)^2) for a fixed random R.
inline std::vector<double> op_gradient_errors(const std::vector<Mat>& inputs, const OpBuilder& op,
                                              std::uint64_t seed = 1) {
  Mat probe;
  auto evaluate = [&](Tape& tape, const std::vector<Mat>& xs, std::vector<Var>& leaves) {
    leaves.clear();
    for (const Mat& x : xs) leaves.push_back(tape.leaf(x));
    Var out = op(tape, leaves);
    if (probe.size() == 0) {
      std::mt19937_64 rng(seed);
      probe = random_mat(rng, out.value().rows(), out.value().cols());
    }
    return ops::sum_squares(ops::add(out, tape.constant(probe)));
  };

  Tape tape;
  std::vector<Var> leaves;
  Var loss = evaluate(tape, inputs, leaves);
  tape.backward(loss);
  std::vector<double> errors;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Mat analytic = tape.grad(leaves[k]);
    const Mat numeric = central_diff(
        [&](const Mat& x) {
          std::vector<Mat> xs = inputs;
          xs[k] = x;
          Tape t;
          std::vector<Var> l;
          return evaluate(t, xs, l).value()(0, 0);
        },
        inputs[k]);
    errors.push_back(rel_error(analytic, numeric));
  }
  return errors;
}

using LossBuilder = std::function<Var(Tape&, const ParamBinding&)>;

// Relative gradient error per checkpoint tensor for a scalar model loss.
inline std::map<std::string, double> model_gradient_errors(const Checkpoint& ck,
                                                           const LossBuilder& loss_fn) {
  Tape tape;
  const ParamBinding params = bind_params(tape, ck);
  const GradMap grads = backward(tape, loss_fn(tape, params), params, ck);
  std::map<std::string, double> errors;
  for (const auto& [name, tensor] : ck.tensors) {
    const Tensor& g = grads.at(name);
    const Mat numeric = central_diff(
        [&](const Mat& x) {
          Checkpoint probe = ck;
          probe.at(name).data.assign(x.data(), x.data() + x.size());
          Tape t;
          return loss_fn(t, bind_params(t, probe, false)).value()(0, 0);
        },
        as_mat(tensor));
    errors[name] = g.shape == tensor.shape ? rel_error(as_mat(g), numeric) : 1e300;
  }
  return errors;
}

// One named gradient check over micro shapes.
struct GradCase {
  std::string name;
  std::vector<double> errors;
};

// Every differentiable tape operation on small random inputs.
inline std::vector<GradCase> all_op_gradient_cases() {
  std::vector<GradCase> out;
  std::mt19937_64 rng(2);
  auto add = [&](std::string name, std::vector<Mat> in, const OpBuilder& op) {
    out.push_back({std::move(name), op_gradient_errors(in, op, out.size() + 1)});
  };
  add("linear", {random_mat(rng, 3, 4), random_mat(rng, 5, 4)},
      [](Tape&, std::span<const Var> v) { return ops::linear(v[0], v[1]); });
  static const std::vector<Token> ids{2, 0, 2, 4};
  add("embedding", {random_mat(rng, 5, 3)},
      [](Tape&, std::span<const Var> v) { return ops::embedding(v[0], ids); });
  add("add", {random_mat(rng, 3, 4), random_mat(rng, 3, 4)},
      [](Tape&, std::span<const Var> v) { return ops::add(v[0], v[1]); });
  add("mul", {random_mat(rng, 3, 4), random_mat(rng, 3, 4)},
      [](Tape&, std::span<const Var> v) { return ops::mul(v[0], v[1]); });
  add("silu", {random_mat(rng, 3, 4, 2.0)},
      [](Tape&, std::span<const Var> v) { return ops::silu(v[0]); });
  add("rmsnorm", {random_mat(rng, 4, 6), random_mat(rng, 1, 6)},
      [](Tape&, std::span<const Var> v) { return ops::rmsnorm(v[0], v[1], 1e-5); });
  add("rope", {random_mat(rng, 6, 8)}, [](Tape&, std::span<const Var> v) {
    return ops::rope(v[0], {.seq_len = 3, .n_heads = 2, .head_dim = 4, .theta = 10000.0});
  });
  for (std::size_t kv : {1u, 2u}) {
    add("causal_attention(kv=" + std::to_string(kv) + ")",
        {random_mat(rng, 8, 6), random_mat(rng, 8, 3 * kv), random_mat(rng, 8, 3 * kv)},
        [kv](Tape&, std::span<const Var> v) {
          return ops::causal_attention(
              v[0], v[1], v[2], {.seq_len = 4, .n_heads = 2, .n_kv_heads = kv, .head_dim = 3});
        });
  }
  static const std::vector<Token> tokens{1, 4, 0, 2, 2, 3};
  add("next_token_nll", {random_mat(rng, 6, 5)},
      [](Tape&, std::span<const Var> v) { return ops::next_token_nll(v[0], tokens, 3); });
  add("span_logprob", {random_mat(rng, 6, 5)},
      [](Tape&, std::span<const Var> v) { return ops::span_logprob(v[0], tokens, 2); });
  add("sub/scale/add_scalar", {random_mat(rng, 1, 1), random_mat(rng, 1, 1)},
      [](Tape&, std::span<const Var> v) {
        return ops::add_scalar(ops::scale(ops::sub(v[0], v[1]), -1.7), 0.3);
      });
  add("neg_log_sigmoid", {random_mat(rng, 1, 1, 3.0)},
      [](Tape&, std::span<const Var> v) { return ops::neg_log_sigmoid(v[0]); });
  add("mean", {random_mat(rng, 1, 1), random_mat(rng, 1, 1), random_mat(rng, 1, 1)},
      [](Tape&, std::span<const Var> v) { return ops::mean(v); });
  add("sum_squares", {random_mat(rng, 2, 3)},
      [](Tape&, std::span<const Var> v) { return ops::sum_squares(v[0]); });
  return out;
}

}  // namespace dustk::testing
