#pragma once

#include <string>

#include "pathonet/tensor.hpp"

namespace pathonet {

/// Reads a binary PGM (P5) or PPM (P6) with maxval 255 into a (C,H,W)
/// tensor scaled to [0,1]. C is 1 for PGM, 3 for PPM.
Tensor<float> load_raster(const std::string& path);
Tensor<float> decode_raster(const std::vector<std::uint8_t>& bytes, const std::string& what);

/// Writes a (1,H,W) tensor as P5 or a (3,H,W) tensor as P6, maxval 255.
/// Values are clamped to [0,1] and rounded to 8-bit.
void save_raster(const Tensor<float>& image, const std::string& path);
std::vector<std::uint8_t> encode_raster(const Tensor<float>& image);

/// Grayscale (1,H,W) replicated to (3,H,W); 3-channel input returned as is.
Tensor<float> to_rgb(const Tensor<float>& image);

} // namespace pathonet
