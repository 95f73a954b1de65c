#include "defgate/gradient_repr.hpp"

#include <algorithm>
#include <stdexcept>

#include "defgate/autodiff.hpp"

namespace defgate {

Tensor to_gradient(const TransformationModel& mt, const Tensor& x) { return input_gradient(mt.net, x); }

GradientImage normalize_gradient(const Tensor& raw) {
  check_finite(raw, "raw gradient");
  const auto [mn_it, mx_it] = std::minmax_element(raw.data.begin(), raw.data.end());
  const float mn = *mn_it, mx = *mx_it;
  GradientImage out{Tensor::zeros(raw.shape)};
  if (static_cast<double>(mx) - static_cast<double>(mn) < 1e-12) {
    return out;  // contentless gradient maps to all zeros
  }
  const float scale = 255.0f / (mx - mn);
  for (std::size_t i = 0; i < raw.data.size(); ++i) {
    out.tensor.data[i] = std::clamp((raw.data[i] - mn) * scale, 0.0f, 255.0f);
  }
  return out;
}

std::vector<LabeledGradient> transform_dataset(const TransformationModel& mt, std::span<const LabeledImage> images) {
  std::vector<LabeledGradient> out;
  out.reserve(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    try {
      out.push_back({normalize_gradient(to_gradient(mt, images[i].image)), images[i].label});
    } catch (const std::exception& e) {
      throw std::runtime_error("sample " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace defgate
