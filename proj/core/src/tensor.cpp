#include "dustk/tensor.hpp"

#include <cstring>
#include <functional>
#include <numeric>

#include "dustk/errors.hpp"

namespace dustk {

const char* dtype_name(DType dtype) {
  return dtype == DType::kFloat32 ? "F32" : "F64";
}

std::size_t dtype_size(DType dtype) {
  return dtype == DType::kFloat32 ? 4 : 8;
}

std::size_t shape_numel(std::span<const std::size_t> shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in)
    : shape(std::move(shape_in)), data(std::move(data_in)) {
  if (shape_numel(shape) != data.size()) {
    throw ValidationError("tensor data length does not match shape");
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape_in) {
  const std::size_t n = shape_numel(shape_in);
  return Tensor(std::move(shape_in), std::vector<double>(n, 0.0));
}

std::size_t Tensor::cols() const {
  if (shape.size() < 2) return numel();
  return numel() / shape.front();
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape || a.data.size() != b.data.size()) return false;
  return a.data.empty() ||
         std::memcmp(a.data.data(), b.data.data(),
                     a.data.size() * sizeof(double)) == 0;
}

}  // namespace dustk
