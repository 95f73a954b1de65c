#include "defgate/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace defgate {

namespace {
void validate_shape(std::span<const int> shape) {
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor shape dimensions must be positive, got " + shape_str(shape));
  }
}
}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
  validate_shape(shape);
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
    throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                " does not match shape " + shape_str(shape));
  }
}

Tensor Tensor::zeros(std::vector<int> s) {
  validate_shape(s);
  std::vector<float> d(static_cast<std::size_t>(shape_numel(s)), 0.0f);
  return Tensor(std::move(s), std::move(d));
}

Tensor Tensor::full(std::vector<int> s, float value) {
  validate_shape(s);
  std::vector<float> d(static_cast<std::size_t>(shape_numel(s)), value);
  return Tensor(std::move(s), std::move(d));
}

std::int64_t shape_numel(std::span<const int> shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string shape_str(std::span<const int> shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

void check_finite(const Tensor& t, const std::string& what) {
  for (float v : t.data) {
    if (!std::isfinite(v)) throw std::runtime_error(what + " contains a non-finite value");
  }
}

}  // namespace defgate
