#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shareprefill/block_grid.hpp"
#include "shareprefill/matrix.hpp"

namespace shareprefill
{
/// 8-bit grayscale image, row-major.
using GrayImage = Matrix<std::uint8_t>;

/// Set bits white, everything else black; `scale` repeats each block as a
/// scale x scale square.
GrayImage mask_image(const BlockMask& mask, std::size_t scale = 1);

/// Values clamped to [0, 1] and mapped linearly to 0..255.
GrayImage heatmap_image(const Matrix<double>& values, std::size_t scale = 1);

/// Binary (P5) PGM. Throws IoError.
void write_pgm(const GrayImage& image, const std::string& path);
}  // namespace shareprefill
