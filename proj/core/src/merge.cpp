#include "dustk/merge.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dustk/errors.hpp"

namespace dustk {

std::vector<MergeIssue> merge_compatible(const Checkpoint& a, const Checkpoint& b) {
  std::vector<MergeIssue> out;
  if (a.config.n_layers != b.config.n_layers) {
    out.push_back({"", "layer count mismatch: " + std::to_string(a.config.n_layers) +
                           " vs " + std::to_string(b.config.n_layers)});
  } else if (!(a.config == b.config)) {
    out.push_back({"", "model configs differ"});
  }
  for (const auto& [name, ta] : a.tensors) {
    const auto it = b.tensors.find(name);
    if (it == b.tensors.end()) {
      out.push_back({name, "tensor only in first checkpoint: " + name});
    } else if (it->second.shape != ta.shape) {
      out.push_back({name, "shape mismatch for " + name});
    }
  }
  for (const auto& [name, _] : b.tensors) {
    if (!a.contains(name)) {
      out.push_back({name, "tensor only in second checkpoint: " + name});
    }
  }
  return out;
}

namespace {

void require_compatible(const Checkpoint& a, const Checkpoint& b) {
  const auto issues = merge_compatible(a, b);
  if (issues.empty()) return;
  std::string msg = "checkpoints are not merge-compatible:";
  for (const auto& issue : issues) msg += "\n  " + issue.message;
  throw ValidationError(msg);
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

Checkpoint merge_average(std::span<const Checkpoint> sources,
                         std::span<const double> weights) {
  if (sources.size() < 2) throw ValidationError("average merge needs >= 2 sources");
  if (weights.size() != sources.size()) {
    throw ValidationError("one weight per source is required");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ValidationError("merge weights must be finite and non-negative");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ValidationError("merge weights must sum to 1 (got " + std::to_string(total) + ")");
  }
  for (std::size_t i = 1; i < sources.size(); ++i) require_compatible(sources[0], sources[i]);

  Checkpoint out = sources[0];
  for (auto& [name, tensor] : out.tensors) {
    for (std::size_t e = 0; e < tensor.data.size(); ++e) {
      double acc = 0.0;
      for (std::size_t i = 0; i < sources.size(); ++i) {
        acc += weights[i] * sources[i].at(name).data[e];
      }
      tensor.data[e] = acc;
    }
  }
  return out;
}

std::vector<double> slerp_vec(std::span<const double> u, std::span<const double> v,
                              double t, SlerpOptions options) {
  if (u.size() != v.size()) throw ValidationError("slerp inputs differ in length");
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("slerp t must lie in [0, 1]");
  const double nu = std::sqrt(dot(u, u));
  const double nv = std::sqrt(dot(v, v));
  if (nu == 0.0 && nv == 0.0) throw ValidationError("slerp inputs are both zero");

  std::vector<double> out(u.size());
  auto lerp = [&] {
    // u + t(v - u) reproduces u exactly when u == v.
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = t == 1.0 ? v[i] : u[i] + t * (v[i] - u[i]);
    return out;
  };
  // One zero input has no direction; interpolate linearly.
  if (nu == 0.0 || nv == 0.0) return lerp();

  const double cos_omega = std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
  const double omega = std::acos(cos_omega);
  if (omega < options.parallel_eps || std::numbers::pi - omega < options.parallel_eps) {
    if (!options.allow_fallback) {
      throw NumericError("slerp inputs are (anti)parallel and fallback is disabled");
    }
    return lerp();
  }
  const double sin_omega = std::sin(omega);
  const double cu = std::sin((1.0 - t) * omega) / sin_omega;
  const double cv = std::sin(t * omega) / sin_omega;
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = cu * u[i] + cv * v[i];
  return out;
}

Checkpoint merge_slerp(const Checkpoint& a, const Checkpoint& b, double t,
                       SlerpOptions options) {
  if (!(t >= 0.0 && t <= 1.0)) throw ValidationError("slerp t must lie in [0, 1]");
  require_compatible(a, b);
  Checkpoint out = a;
  for (auto& [name, tensor] : out.tensors) {
    const Tensor& tb = b.at(name);
    const bool a_zero = std::all_of(tensor.data.begin(), tensor.data.end(),
                                    [](double x) { return x == 0.0; });
    const bool b_zero = std::all_of(tb.data.begin(), tb.data.end(),
                                    [](double x) { return x == 0.0; });
    // Two all-zero tensors interpolate to zero; slerp_vec itself rejects them.
    if (a_zero && b_zero) continue;
    tensor.data = slerp_vec(tensor.data, tb.data, t, options);
  }
  return out;
}

}  // namespace dustk
