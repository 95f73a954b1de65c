#pragma once

#include <vector>

#include "defgate/tensor.hpp"

namespace defgate {

// One training/eval record: an image-like tensor plus an integer label
// (victim class id, or real=0 / fake=1 for detector data).
struct LabeledImage {
  Tensor image;
  int label = 0;
};

using Dataset = std::vector<LabeledImage>;

}  // namespace defgate
