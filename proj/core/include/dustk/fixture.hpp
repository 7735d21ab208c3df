#pragma once

#include <cstdint>

#include "dustk/checkpoint.hpp"

namespace dustk {

struct FixtureOptions {
  std::uint64_t seed = 0;
  // Standard deviation of matrix entries.
  double init_std = 0.02;
  // Norm weights are 1 + N(0, norm_jitter).
  double norm_jitter = 0.0;
  DType dtype = DType::kFloat32;
};

// Randomly initialized checkpoint satisfying the schema for `config`.
// Values are rounded to float32 when dtype is kFloat32 so that save/load
// round-trips exactly. Throws ValidationError for an invalid config.
Checkpoint random_checkpoint(const ModelConfig& config, const FixtureOptions& options = {});

// Same schema with every value zero.
Checkpoint zero_checkpoint(const ModelConfig& config, DType dtype = DType::kFloat64);

}  // namespace dustk
