#pragma once

#include <span>
#include <string>
#include <vector>

#include "dustk/checkpoint.hpp"

namespace dustk {

struct MergeIssue {
  std::string tensor;  // empty for config-level differences
  std::string message;
};

// Empty iff configs are equal and both hold the same tensor names and shapes.
std::vector<MergeIssue> merge_compatible(const Checkpoint& a, const Checkpoint& b);

// Elementwise sum_i weights[i] * sources[i]. Weights must be non-negative
// and sum to 1 within 1e-9. Config and dtype come from sources[0].
Checkpoint merge_average(std::span<const Checkpoint> sources,
                         std::span<const double> weights);

struct SlerpOptions {
  // Angle (radians) from 0 or pi below which interpolation is linear.
  double parallel_eps = 1e-7;
  // When false, (anti)parallel inputs throw instead of falling back.
  bool allow_fallback = true;
};

// Spherical interpolation between u (t = 0) and v (t = 1).
std::vector<double> slerp_vec(std::span<const double> u, std::span<const double> v,
                              double t, SlerpOptions options = {});

// Each tensor is flattened and interpolated independently with a single t.
Checkpoint merge_slerp(const Checkpoint& a, const Checkpoint& b, double t,
                       SlerpOptions options = {});

}  // namespace dustk
