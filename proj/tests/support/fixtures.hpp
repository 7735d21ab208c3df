#pragma once

#include "dustk/fixture.hpp"
#include "dustk/model_config.hpp"

namespace dustk::testing {

// d_model=8, 2 layers, 2 heads, d_ff=16, vocab=32.
inline ModelConfig tiny_config(bool tied = false) {
  ModelConfig c;
  c.n_layers = 2;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_kv_heads = 2;
  c.d_ff = 16;
  c.vocab_size = 32;
  c.tied_embeddings = tied;
  return c;
}

// d_model=4, 1 layer, vocab=7: the gradient-check shape.
inline ModelConfig micro_config() {
  ModelConfig c;
  c.n_layers = 1;
  c.d_model = 4;
  c.n_heads = 2;
  c.n_kv_heads = 2;
  c.d_ff = 6;
  c.vocab_size = 7;
  return c;
}

// Weights large enough that layers visibly change the residual stream.
inline Checkpoint generic_fixture(const ModelConfig& c, std::uint64_t seed,
                                  DType dtype = DType::kFloat64) {
  FixtureOptions o;
  o.seed = seed;
  o.init_std = 0.4;
  o.norm_jitter = 0.2;
  o.dtype = dtype;
  return random_checkpoint(c, o);
}

}  // namespace dustk::testing
