#pragma once

// 8-bit PNG read/write over libpng's simplified API.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fusionsam/label_grid.hpp"
#include "fusionsam/tensor.hpp"

namespace fusionsam {

struct Image8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;  // 1 (gray) or 3 (RGB)
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

using Rgb = std::array<std::uint8_t, 3>;

/// Any PNG converted to RGB8.
Image8 read_png_rgb(const std::filesystem::path& path);
/// Any PNG converted to Gray8.
Image8 read_png_gray(const std::filesystem::path& path);
/// Palette PNGs give their raw indices; grayscale PNGs give their 8-bit values.
LabelGrid read_png_indexed(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image8& image);
/// Every id must index into `palette`.
void write_png_indexed(const std::filesystem::path& path, const LabelGrid& ids, std::span<const Rgb> palette);

/// [H x W x C] in [0, 1].
Tensor image_to_tensor(const Image8& image);
/// Clamps to [0, 1] and rounds to the nearest 8-bit level.
Image8 tensor_to_image(const Tensor& hwc);

}  // namespace fusionsam
