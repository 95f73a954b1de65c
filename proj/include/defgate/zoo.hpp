#pragma once

#include "defgate/net.hpp"

namespace defgate {

// Desk-scale architectures for the 3×32×32 task family. Everything trains
// from scratch on CPU in minutes.

// 4-class victim classifier.
NetworkSpec victim_spec(int classes = 4);

// Attacker's clone: two conv blocks + head.
NetworkSpec clone_spec(int classes = 4);

// Noise-to-image generator: a projection transposed-conv from 16×1×1 noise to
// 8×8, then two stride-2 transposed-conv upsampling blocks to 32×32. The odd
// kernel/stride pairing leaves the usual uneven-overlap upsampling texture.
NetworkSpec generator_spec(int noise_ch = 16);
inline std::vector<int> generator_noise_shape(int noise_ch = 16) { return {noise_ch, 1, 1}; }

// Adversarial discriminator: 4 conv layers down to a single logit. Doubles as
// the transformation model for gradient representations.
NetworkSpec discriminator_spec();

// Denoiser for the diffusion-like source: conv down, transposed-conv up.
NetworkSpec denoiser_spec();

// Binary real/fake classifier: 3 conv blocks (16/32/64, stride 2) + 2-way head.
NetworkSpec subdetector_spec();

}  // namespace defgate
