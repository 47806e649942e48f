#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "bdl/tensor.hpp"

namespace bdl::harness {

inline constexpr std::size_t kGridSeparator = 2;
inline constexpr std::uint8_t kGridSeparatorValue = 128;

// 8-bit tiled image, row-major over tiles, separators between tiles only.
struct GridImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;
  std::vector<std::uint8_t> pixels;
};

// images: rows * cols tensors, all H x W x C with C in {1, 3}.
GridImage tile_grid(const std::vector<Tensor>& images, std::size_t rows, std::size_t cols);
std::string encode_png(const GridImage& grid);
GridImage decode_png(const std::string& bytes);

void emit_grid(const std::vector<Tensor>& images, std::size_t rows, std::size_t cols, const std::filesystem::path& path);

// Splits a batch x pixels tensor into per-image H x W x C tensors.
std::vector<Tensor> unbatch(const Tensor& rows, const Shape& image_shape);

}  // namespace bdl::harness
