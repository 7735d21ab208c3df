#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dustk {

enum class DType { kFloat32, kFloat64 };

const char* dtype_name(DType dtype);
std::size_t dtype_size(DType dtype);

// Dense row-major tensor. Values are held in double; the checkpoint dtype
// decides how they are written to disk.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_in, std::vector<double> data_in);
  static Tensor zeros(std::vector<std::size_t> shape_in);

  std::size_t numel() const { return data.size(); }
  // Matrix view: a 1-D tensor is a single row.
  std::size_t rows() const { return shape.size() < 2 ? 1 : shape.front(); }
  std::size_t cols() const;

  std::span<const double> values() const { return data; }
  std::span<double> values() { return data; }

  bool operator==(const Tensor&) const = default;
};

std::size_t shape_numel(std::span<const std::size_t> shape);

// Compares shape and the raw bytes of every element.
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace dustk
