#include "dustk/fixture.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "dustk/errors.hpp"

namespace dustk {

namespace {

void require_config(const ModelConfig& config) {
  const auto problems = config_problems(config);
  if (!problems.empty()) throw ValidationError("invalid config: " + problems.front());
}

// Box-Muller over raw mt19937_64 output, so fixtures do not depend on the
// standard library's distribution implementations.
class PortableNormal {
 public:
  explicit PortableNormal(std::uint64_t seed) : rng_(seed) {}
  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = unit_open();
    const double u2 = unit_open();
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  // Uniform on (0, 1) from the top 53 bits.
  double unit_open() { return (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53; }

  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace

Checkpoint random_checkpoint(const ModelConfig& config, const FixtureOptions& options) {
  require_config(config);
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.dtype = options.dtype;
  PortableNormal normal(options.seed);
  const bool narrow = options.dtype == DType::kFloat32;
  // expected_schema is name-sorted, so draws are independent of insertion order.
  for (const auto& spec : expected_schema(config)) {
    Tensor t = Tensor::zeros(spec.shape);
    const bool is_norm = spec.shape.size() == 1;
    for (double& v : t.data) {
      v = is_norm ? 1.0 + options.norm_jitter * normal() : options.init_std * normal();
      if (narrow) v = static_cast<float>(v);
    }
    ckpt.tensors.emplace(spec.name, std::move(t));
  }
  return ckpt;
}

Checkpoint zero_checkpoint(const ModelConfig& config, DType dtype) {
  require_config(config);
  Checkpoint ckpt;
  ckpt.config = config;
  ckpt.dtype = dtype;
  for (const auto& spec : expected_schema(config)) {
    ckpt.tensors.emplace(spec.name, Tensor::zeros(spec.shape));
  }
  return ckpt;
}

}  // namespace dustk
