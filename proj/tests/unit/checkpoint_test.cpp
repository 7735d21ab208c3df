#include <gtest/gtest.h>

#include <algorithm>

#include "dustk/checkpoint.hpp"
#include "fixtures.hpp"

namespace dustk {
namespace {

using testing::tiny_config;

TEST(Validate, WellFormedFixtureIsClean) {
  EXPECT_TRUE(validate(testing::generic_fixture(tiny_config(), 0)).empty());
  EXPECT_TRUE(validate(testing::generic_fixture(tiny_config(true), 0)).empty());
}

TEST(Validate, MissingTensorIsNamed) {
  Checkpoint ck = testing::generic_fixture(tiny_config(), 0);
  ck.tensors.erase("model.layers.1.mlp.gate_proj.weight");
  const auto v = validate(ck);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::kMissing);
  EXPECT_EQ(v[0].tensor, "model.layers.1.mlp.gate_proj.weight");
}

TEST(Validate, ShapeMismatch) {
  Checkpoint ck = testing::generic_fixture(tiny_config(), 0);
  const std::size_t d = ck.config.d_model;
  ck.at("model.layers.0.self_attn.q_proj.weight") = Tensor::zeros({d + 1, d});
  const auto v = validate(ck);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::kShape);
  EXPECT_EQ(v[0].tensor, "model.layers.0.self_attn.q_proj.weight");
}

TEST(Validate, EnumeratesEveryViolation) {
  Checkpoint ck = testing::generic_fixture(tiny_config(), 0);
  ck.tensors.erase(std::string(names::kLmHead));
  ck.tensors.emplace("model.layers.9.extra", Tensor({1}, {0.0}));
  ck.at(names::kFinalNorm).data[0] = std::numeric_limits<double>::infinity();
  ck.at(names::kEmbed).data.pop_back();
  const auto v = validate(ck);
  auto has = [&](Violation::Kind k) {
    return std::any_of(v.begin(), v.end(), [&](const Violation& x) { return x.kind == k; });
  };
  EXPECT_TRUE(has(Violation::Kind::kMissing));
  EXPECT_TRUE(has(Violation::Kind::kUnexpected));
  EXPECT_TRUE(has(Violation::Kind::kNonFinite));
  EXPECT_TRUE(has(Violation::Kind::kDataSize));
  EXPECT_TRUE(validate(ck, {.check_finite = false}).size() == v.size() - 1);
}

TEST(Validate, TiedCheckpointMustNotCarryHead) {
  Checkpoint ck = testing::generic_fixture(tiny_config(true), 0);
  ck.tensors.emplace(std::string(names::kLmHead), Tensor::zeros({32, 8}));
  const auto v = validate(ck);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].kind, Violation::Kind::kUnexpected);
}

TEST(Validate, ConfigInvariants) {
  ModelConfig c = tiny_config();
  c.n_heads = 3;
  EXPECT_FALSE(config_problems(c).empty());
  c = tiny_config();
  c.n_kv_heads = 3;
  EXPECT_FALSE(config_problems(c).empty());
  c = tiny_config();
  c.vocab_size = 0;
  EXPECT_FALSE(config_problems(c).empty());
  Checkpoint ck;
  ck.config = c;
  ASSERT_FALSE(validate(ck).empty());
  EXPECT_EQ(validate(ck).front().kind, Violation::Kind::kConfig);
}

TEST(CountParams, SimpleShapes) {
  Checkpoint ck;
  ck.tensors.emplace("x", Tensor::zeros({2, 3}));
  ck.tensors.emplace("y", Tensor::zeros({4}));
  EXPECT_EQ(count_params(ck), 10u);
}

TEST(CountParams, TinyFixtureHandTally) {
  // embed 32*8 + 2 * (4*64 attn + 3*128 mlp + 2*8 norms) + 8 final norm + 32*8 head
  EXPECT_EQ(count_params(testing::generic_fixture(tiny_config(), 0)), 1832u);
  EXPECT_EQ(count_params(testing::generic_fixture(tiny_config(true), 0)), 1832u - 32u * 8u);
  EXPECT_EQ(params_per_layer(tiny_config()), 656u);
}

TEST(Names, SplitLayerName) {
  std::size_t layer = 0;
  std::string suffix;
  ASSERT_TRUE(names::split_layer_name("model.layers.17.mlp.up_proj.weight", layer, suffix));
  EXPECT_EQ(layer, 17u);
  EXPECT_EQ(suffix, "mlp.up_proj.weight");
  EXPECT_FALSE(names::split_layer_name("model.norm.weight", layer, suffix));
  EXPECT_FALSE(names::split_layer_name("model.layers.x.mlp", layer, suffix));
  EXPECT_FALSE(names::split_layer_name("model.layers.01.mlp", layer, suffix));
}

}  // namespace
}  // namespace dustk
