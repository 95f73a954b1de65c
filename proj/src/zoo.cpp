#include "defgate/zoo.hpp"

namespace defgate {

NetworkSpec victim_spec(int classes) {
  return {{3, 32, 32},
          {Conv2d{3, 12, 3, 2, 1}, Relu{}, Conv2d{12, 24, 3, 2, 1}, Relu{}, Flatten{}, Dense{24 * 8 * 8, 48}, Relu{},
           Dense{48, classes}, Softmax{}}};
}

NetworkSpec clone_spec(int classes) {
  return {{3, 32, 32},
          {Conv2d{3, 10, 3, 2, 1}, Relu{}, Conv2d{10, 20, 3, 2, 1}, Relu{}, Flatten{}, Dense{20 * 8 * 8, 40}, Relu{},
           Dense{40, classes}, Softmax{}}};
}

NetworkSpec generator_spec(int noise_ch) {
  return {{noise_ch, 1, 1},
          {TConv2d{noise_ch, 24, 8, 1, 0, 0}, LeakyRelu{0.2f}, TConv2d{24, 12, 3, 2, 1, 1}, LeakyRelu{0.2f},
           TConv2d{12, 3, 3, 2, 1, 1}}};
}

NetworkSpec discriminator_spec() {
  return {{3, 32, 32},
          {Conv2d{3, 8, 3, 2, 1}, LeakyRelu{0.2f}, Conv2d{8, 16, 3, 2, 1}, LeakyRelu{0.2f}, Conv2d{16, 32, 3, 2, 1},
           LeakyRelu{0.2f}, Conv2d{32, 1, 4, 1, 0}}};
}

NetworkSpec denoiser_spec() {
  return {{3, 32, 32},
          {Conv2d{3, 16, 3, 2, 1}, LeakyRelu{0.2f}, Conv2d{16, 32, 3, 2, 1}, LeakyRelu{0.2f},
           TConv2d{32, 16, 3, 2, 1, 1}, LeakyRelu{0.2f}, TConv2d{16, 3, 3, 2, 1, 1}}};
}

NetworkSpec subdetector_spec() {
  return {{3, 32, 32},
          {Conv2d{3, 16, 3, 2, 1}, Relu{}, Conv2d{16, 32, 3, 2, 1}, Relu{}, Conv2d{32, 64, 3, 2, 1}, Relu{},
           Flatten{}, Dense{64 * 4 * 4, 2}, Softmax{}}};
}

}  // namespace defgate
