#include "dustk/surgery.hpp"

#include <algorithm>

#include "dustk/errors.hpp"

namespace dustk {

ScalePlan plan_scale(std::size_t n, std::size_t m) {
  if (n < 1) throw ValidationError("base layer count must be >= 1");
  if (m >= n) {
    throw ValidationError("trim m=" + std::to_string(m) + " must satisfy m < n=" +
                          std::to_string(n));
  }
  ScalePlan plan{n, m, 2 * (n - m), {}};
  plan.origin.reserve(plan.s);
  for (std::size_t i = 0; i < n - m; ++i) plan.origin.push_back(i);
  for (std::size_t i = m; i < n; ++i) plan.origin.push_back(i);
  return plan;
}

std::size_t default_trim(std::size_t n) { return n / 4; }

std::vector<std::size_t> compose_origins(const ScalePlan& first,
                                         const ScalePlan& second) {
  if (second.n != first.s) {
    throw ValidationError("second plan expects " + std::to_string(second.n) +
                          " layers, first produces " + std::to_string(first.s));
  }
  std::vector<std::size_t> out;
  out.reserve(second.s);
  for (std::size_t j : second.origin) out.push_back(first.origin[j]);
  return out;
}

nlohmann::json plan_to_json(const ScalePlan& plan) {
  return {{"n", plan.n}, {"m", plan.m}, {"s", plan.s}, {"origin", plan.origin}};
}

Checkpoint depthwise_scale(const Checkpoint& base, const ScalePlan& plan) {
  if (base.config.n_layers != plan.n) {
    throw ValidationError("plan expects " + std::to_string(plan.n) +
                          " layers but checkpoint has " +
                          std::to_string(base.config.n_layers));
  }
  Checkpoint out;
  out.config = base.config;
  out.config.n_layers = plan.s;
  out.dtype = base.dtype;
  for (const auto& [name, tensor] : base.tensors) {
    std::size_t layer = 0;
    std::string suffix;
    if (!names::split_layer_name(name, layer, suffix)) {
      out.tensors.emplace(name, tensor);
    }
  }
  for (std::size_t j = 0; j < plan.s; ++j) {
    for (auto suffix : names::kLayerSuffixes) {
      out.tensors.emplace(names::layer_tensor(j, suffix),
                          base.at(names::layer_tensor(plan.origin[j], suffix)));
    }
  }
  require_valid(out, {.check_finite = false});
  return out;
}

Checkpoint naive_duplicate(const Checkpoint& base) {
  return depthwise_scale(base, plan_scale(base.config.n_layers, 0));
}

SeamProfile seam_profile(const ScalePlan& plan) {
  SeamProfile p;
  p.seam_index = plan.n - plan.m - 1;
  for (std::size_t j = 0; j + 1 < plan.origin.size(); ++j) {
    const auto gap = static_cast<std::int64_t>(plan.origin[j + 1]) -
                     static_cast<std::int64_t>(plan.origin[j]);
    p.gaps.push_back(gap);
    p.max_discontinuity = std::max<std::int64_t>(p.max_discontinuity, gap > 1 ? gap - 1 : 1 - gap);
  }
  return p;
}

nlohmann::json seam_to_json(const SeamProfile& profile) {
  return {{"gaps", profile.gaps},
          {"seam_index", profile.seam_index},
          {"max_discontinuity", profile.max_discontinuity}};
}

}  // namespace dustk
