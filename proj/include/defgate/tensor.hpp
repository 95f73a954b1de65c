#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace defgate {

// Dense row-major float tensor. The data length always equals the product of
// the shape dimensions, and public operations keep every element finite.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<float> d);

  static Tensor zeros(std::vector<int> s);
  static Tensor full(std::vector<int> s, float value);

  std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  float& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }
  float operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
};

std::int64_t shape_numel(std::span<const int> shape);
std::string shape_str(std::span<const int> shape);
bool same_shape(const Tensor& a, const Tensor& b);

// Throws std::runtime_error naming `what` if any element is NaN or infinite.
void check_finite(const Tensor& t, const std::string& what);

}  // namespace defgate
