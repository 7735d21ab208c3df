#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "dustk/autodiff.hpp"
#include "dustk/errors.hpp"
#include "dustk/refmodel.hpp"
#include "dustk/train.hpp"
#include "gradcheck.hpp"
#include "fixtures.hpp"

namespace dustk {
namespace {

using testing::random_mat;

constexpr double kTol = 1e-4;

void check_op(const std::vector<Mat>& inputs, const testing::OpBuilder& op) {
  const auto errors = testing::op_gradient_errors(inputs, op);
  for (std::size_t k = 0; k < errors.size(); ++k) EXPECT_LT(errors[k], kTol) << "input " << k;
}

TEST(Autodiff, SumOfSquaresGradientIsTwiceValue) {
  std::mt19937_64 rng(0);
  const Mat w = random_mat(rng, 3, 5);
  Tape tape;
  Var x = tape.leaf(w);
  tape.backward(ops::sum_squares(x));
  EXPECT_LT((tape.grad(x) - 2.0 * w).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Autodiff, CrossEntropyGradientIsSoftmaxMinusOneHot) {
  std::mt19937_64 rng(1);
  const Mat z = random_mat(rng, 2, 5);
  const std::vector<Token> tokens{3, 1};
  Tape tape;
  Var logits = tape.leaf(z);
  tape.backward(ops::next_token_nll(logits, tokens, 2));
  const Mat g = tape.grad(logits);
  Eigen::RowVectorXd p = z.row(0).array().exp();
  p /= p.sum();
  p(1) -= 1.0;
  EXPECT_LT((g.row(0) - p).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(g.row(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Autodiff, RejectsNonFiniteLoss) {
  Tape tape;
  Mat bad(1, 1);
  bad(0, 0) = std::numeric_limits<double>::infinity();
  Var x = tape.leaf(bad);
  EXPECT_THROW(tape.backward(x), NumericError);
  Tape tape2;
  Var y = tape2.leaf(Mat::Ones(2, 2));
  EXPECT_THROW(tape2.backward(y), ValidationError);
}

TEST(AutodiffOps, Linear) {
  std::mt19937_64 rng(2);
  check_op({random_mat(rng, 3, 4), random_mat(rng, 5, 4)},
           [](Tape&, std::span<const Var> v) { return ops::linear(v[0], v[1]); });
}

TEST(AutodiffOps, Embedding) {
  std::mt19937_64 rng(3);
  const std::vector<Token> ids{2, 0, 2, 4};
  check_op({random_mat(rng, 5, 3)},
           [&](Tape&, std::span<const Var> v) { return ops::embedding(v[0], ids); });
}

TEST(AutodiffOps, ElementwiseAndActivation) {
  std::mt19937_64 rng(4);
  check_op({random_mat(rng, 3, 4), random_mat(rng, 3, 4)},
           [](Tape&, std::span<const Var> v) { return ops::add(v[0], v[1]); });
  check_op({random_mat(rng, 3, 4), random_mat(rng, 3, 4)},
           [](Tape&, std::span<const Var> v) { return ops::mul(v[0], v[1]); });
  check_op({random_mat(rng, 3, 4, 2.0)},
           [](Tape&, std::span<const Var> v) { return ops::silu(v[0]); });
}

TEST(AutodiffOps, RmsNorm) {
  std::mt19937_64 rng(5);
  check_op({random_mat(rng, 4, 6), random_mat(rng, 1, 6)},
           [](Tape&, std::span<const Var> v) { return ops::rmsnorm(v[0], v[1], 1e-5); });
}

TEST(AutodiffOps, Rope) {
  std::mt19937_64 rng(6);
  const kernels::RopeShape shape{.seq_len = 3, .n_heads = 2, .head_dim = 4, .theta = 10000.0};
  check_op({random_mat(rng, 6, 8)},
           [&](Tape&, std::span<const Var> v) { return ops::rope(v[0], shape); });
}

TEST(AutodiffOps, CausalAttentionWithGroupedHeads) {
  std::mt19937_64 rng(7);
  for (std::size_t kv : {1u, 2u}) {
    const kernels::AttentionShape shape{.seq_len = 4, .n_heads = 2, .n_kv_heads = kv, .head_dim = 3};
    check_op({random_mat(rng, 8, 6), random_mat(rng, 8, 3 * kv), random_mat(rng, 8, 3 * kv)},
             [&](Tape&, std::span<const Var> v) {
               return ops::causal_attention(v[0], v[1], v[2], shape);
             });
  }
}

TEST(AutodiffOps, SharedCatalogue) {
  for (const auto& c : testing::all_op_gradient_cases()) {
    for (double e : c.errors) EXPECT_LT(e, kTol) << c.name;
  }
}

TEST(AutodiffOps, LossesAndScalars) {
  std::mt19937_64 rng(8);
  const std::vector<Token> tokens{1, 4, 0, 2, 2, 3};
  check_op({random_mat(rng, 6, 5)}, [&](Tape&, std::span<const Var> v) {
    return ops::next_token_nll(v[0], tokens, 3);
  });
  check_op({random_mat(rng, 6, 5)}, [&](Tape&, std::span<const Var> v) {
    return ops::span_logprob(v[0], tokens, 2);
  });
  check_op({random_mat(rng, 1, 1), random_mat(rng, 1, 1)}, [](Tape&, std::span<const Var> v) {
    return ops::add_scalar(ops::scale(ops::sub(v[0], v[1]), -1.7), 0.3);
  });
  check_op({random_mat(rng, 1, 1, 3.0)},
           [](Tape&, std::span<const Var> v) { return ops::neg_log_sigmoid(v[0]); });
  check_op({random_mat(rng, 1, 1), random_mat(rng, 1, 1), random_mat(rng, 1, 1)},
           [](Tape&, std::span<const Var> v) { return ops::mean(v); });
}

void check_model_gradients(const Checkpoint& ck, const testing::LossBuilder& loss_fn) {
  for (const auto& [name, err] : testing::model_gradient_errors(ck, loss_fn)) {
    EXPECT_LT(err, kTol) << name;
  }
}

TEST(ModelGradients, LanguageModelLossOnMicroModel) {
  for (bool tied : {false, true}) {
    ModelConfig c = testing::micro_config();
    c.tied_embeddings = tied;
    const Checkpoint ck = testing::generic_fixture(c, 17);
    const std::vector<Token> windows{0, 3, 6, 1, 5, 2, 2, 4, 6, 0};
    check_model_gradients(ck, [&](Tape& t, const ParamBinding& p) {
      return lm_loss_var(t, p, c, windows, 5);
    });
  }
}

TEST(ModelGradients, GroupedQueryAttention) {
  ModelConfig c = testing::micro_config();
  c.n_layers = 2;
  c.n_kv_heads = 1;
  const Checkpoint ck = testing::generic_fixture(c, 18);
  const std::vector<Token> windows{6, 5, 4, 3, 2, 1};
  check_model_gradients(ck, [&](Tape& t, const ParamBinding& p) {
    return lm_loss_var(t, p, c, windows, 6);
  });
}

TEST(ModelGradients, DpoLossOnMicroModel) {
  const ModelConfig c = testing::micro_config();
  const Checkpoint policy = testing::generic_fixture(c, 19);
  const RefModel reference(testing::generic_fixture(c, 20));
  const DpoConfig cfg{.beta = 0.5, .reference = &reference};
  const std::vector<DpoTokens> batch{{{1, 2}, {3, 4, 5}, {6, 0}}, {{4}, {1}, {2, 2}}};
  check_model_gradients(policy, [&](Tape& t, const ParamBinding& p) {
    return dpo_loss_var(t, p, c, cfg, batch);
  });
}

TEST(ModelGradients, LogitsMatchRefModel) {
  const ModelConfig c = testing::tiny_config();
  const Checkpoint ck = testing::generic_fixture(c, 21);
  const std::vector<Token> seq{4, 9, 16, 25, 3, 8};
  Tape tape;
  const Var logits = lm_logits(tape, bind_params(tape, ck, false), c, seq, 3);
  const RefModel model(ck);
  const Mat a = model.forward(std::span(seq).first(3));
  const Mat b = model.forward(std::span(seq).subspan(3));
  EXPECT_LT((logits.value().topRows(3) - a).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((logits.value().bottomRows(3) - b).cwiseAbs().maxCoeff(), 1e-12);
}

}  // namespace
}  // namespace dustk
