#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "defgate/tensor.hpp"

namespace defgate {

// Minimal RGB8 PNG writer (zlib-deflated), for corpus and gradient
// inspection only.
void write_png_rgb8(const std::filesystem::path& path, int width, int height, std::span<const std::uint8_t> rgb);

// Quantizes a C×H×W float tensor to 8-bit and writes it. `lo`/`hi` give the
// value range mapped onto 0..255 (e.g. 0..1 for images, 0..255 for gradient
// images). Single-channel tensors are written as grayscale RGB.
void export_tensor_png(const std::filesystem::path& path, const Tensor& t, float lo, float hi);

}  // namespace defgate
