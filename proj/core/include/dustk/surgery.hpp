#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dustk/checkpoint.hpp"
#include "json.hpp"

namespace dustk {

// Depthwise scaling plan: keep layers [0, n-m) of one copy and [m, n) of the
// other, stacked, for s = 2(n-m) layers. origin[j] is the 0-based base layer
// copied into scaled layer j.
struct ScalePlan {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t s = 0;
  std::vector<std::size_t> origin;

  bool operator==(const ScalePlan&) const = default;
};

// Throws ValidationError unless 1 <= n and m < n.
ScalePlan plan_scale(std::size_t n, std::size_t m);

// Default trim for an n-layer base: floor(n / 4) (8 of 32).
std::size_t default_trim(std::size_t n);

// Scaled plans applied in sequence compose: result layer j comes from
// base layer first.origin[second.origin[j]].
std::vector<std::size_t> compose_origins(const ScalePlan& first,
                                         const ScalePlan& second);

nlohmann::json plan_to_json(const ScalePlan& plan);

// Copies per-layer tensors according to plan.origin; embedding, final norm
// and head are copied once from the base. The input is not modified.
Checkpoint depthwise_scale(const Checkpoint& base, const ScalePlan& plan);

// Repeats the whole stack once (n -> 2n); same as plan_scale(n, 0).
Checkpoint naive_duplicate(const Checkpoint& base);

// Origin-index gaps between consecutive scaled layers.
struct SeamProfile {
  std::vector<std::int64_t> gaps;
  std::size_t seam_index = 0;  // gap position joining the two halves
  std::int64_t max_discontinuity = 0;  // max |gap - 1|
};

SeamProfile seam_profile(const ScalePlan& plan);

nlohmann::json seam_to_json(const SeamProfile& profile);

}  // namespace dustk
