#include "bdl/harness/grid.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "bdl/errors.hpp"
#include "bdl/harness/files.hpp"

namespace bdl::harness {

GridImage tile_grid(const std::vector<Tensor>& images, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw SizeError("grid needs at least one row and column");
  if (images.size() != rows * cols) {
    throw SizeError("grid of " + std::to_string(rows) + "x" + std::to_string(cols) + " needs " +
                    std::to_string(rows * cols) + " images, got " + std::to_string(images.size()));
  }
  const Shape& first = images.front().shape();
  if (first.size() != 3) throw DimensionError("grid images must be H x W x C, got " + shape_str(first));
  for (const auto& img : images) {
    if (img.shape() != first) {
      throw DimensionError("grid images must share a shape: " + shape_str(first) + " vs " + shape_str(img.shape()));
    }
  }
  const std::size_t h = first[0], w = first[1], c = first[2];
  if (c != 1 && c != 3) throw DimensionError("grid images need 1 or 3 channels, got " + std::to_string(c));

  GridImage grid;
  grid.channels = c;
  grid.width = cols * w + (cols - 1) * kGridSeparator;
  grid.height = rows * h + (rows - 1) * kGridSeparator;
  grid.pixels.assign(grid.width * grid.height * c, kGridSeparatorValue);
  for (std::size_t t = 0; t < images.size(); ++t) {
    const std::size_t y0 = (t / cols) * (h + kGridSeparator);
    const std::size_t x0 = (t % cols) * (w + kGridSeparator);
    const auto src = images[t].data();
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t k = 0; k < c; ++k) {
          const float v = std::clamp(src[(y * w + x) * c + k], 0.0f, 1.0f);
          grid.pixels[((y0 + y) * grid.width + x0 + x) * c + k] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
        }
      }
    }
  }
  return grid;
}

std::string encode_png(const GridImage& grid) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(grid.width);
  image.height = static_cast<png_uint_32>(grid.height);
  image.format = grid.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, grid.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + image.message);
  }
  std::string out(size, '\0');
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, grid.pixels.data(), 0, nullptr)) {
    throw IoError(std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

GridImage decode_png(const std::string& bytes) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(std::string("png decode failed: ") + image.message);
  }
  GridImage grid;
  grid.channels = (image.format & PNG_FORMAT_FLAG_COLOR) ? 3 : 1;
  image.format = grid.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  grid.width = image.width;
  grid.height = image.height;
  grid.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, grid.pixels.data(), 0, nullptr)) {
    throw FormatError(std::string("png decode failed: ") + image.message);
  }
  return grid;
}

void emit_grid(const std::vector<Tensor>& images, std::size_t rows, std::size_t cols, const std::filesystem::path& path) {
  write_file_atomic(path, encode_png(tile_grid(images, rows, cols)));
}

std::vector<Tensor> unbatch(const Tensor& rows, const Shape& image_shape) {
  const std::size_t pixels = shape_size(image_shape);
  if (rows.rank() != 2 || rows.dim(1) != pixels) {
    throw DimensionError("cannot split " + shape_str(rows.shape()) + " into images of " + shape_str(image_shape));
  }
  std::vector<Tensor> out;
  out.reserve(rows.dim(0));
  const auto data = rows.data();
  for (std::size_t i = 0; i < rows.dim(0); ++i) {
    out.emplace_back(image_shape, std::vector<float>(data.begin() + i * pixels, data.begin() + (i + 1) * pixels));
  }
  return out;
}

}  // namespace bdl::harness
