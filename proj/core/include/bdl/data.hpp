#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "bdl/tensor.hpp"

namespace bdl {

struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t size() const { return height * width * channels; }
  Shape as_shape() const { return {height, width, channels}; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

std::string to_string(const ImageShape& s);

enum class Split { kTrain, kTest };

// Images in [0, 1], stored count x H x W x C; labels optional.
class Dataset {
 public:
  Dataset(std::string name, Split split, Tensor images, std::optional<std::vector<int>> labels = std::nullopt);

  const std::string& name() const { return name_; }
  Split split() const { return split_; }
  const Tensor& images() const { return images_; }
  const std::optional<std::vector<int>>& labels() const { return labels_; }
  bool has_labels() const { return labels_.has_value(); }

  std::size_t count() const { return images_.dim(0); }
  ImageShape image_shape() const;
  std::size_t pixels_per_image() const { return image_shape().size(); }

  std::span<const float> image(std::size_t i) const;
  // Single image as an H x W x C tensor.
  Tensor image_tensor(std::size_t i) const;

  // Rows of the selected images, flattened: indices.size() x (H*W*C).
  Tensor gather(std::span<const std::size_t> indices) const;
  std::vector<int> gather_labels(std::span<const std::size_t> indices) const;

  // First n images (all if n >= count).
  Dataset head(std::size_t n) const;
  Dataset subset(std::span<const std::size_t> indices) const;

 private:
  std::string name_;
  Split split_;
  Tensor images_;
  std::optional<std::vector<int>> labels_;
};

// Reads an IDX image file (magic 0x00000803) and optionally its IDX label
// file (magic 0x00000801). Bytes are scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::optional<std::filesystem::path>& labels_path = std::nullopt,
                 Split split = Split::kTrain, std::string name = "idx");

// Writers for the same format; pixels are rounded to the nearest byte.
void write_idx_images(const std::filesystem::path& path, const Tensor& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels);

// Examples whose label is in `keep`, original order preserved.
Dataset filter_by_labels(const Dataset& d, const std::set<int>& keep);

// Seeded images with one bright axis-aligned rectangle on a dark background;
// label = quadrant of the rectangle center (0 TL, 1 TR, 2 BL, 3 BR).
Dataset synth_blobs(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed);

struct BatchPlan {
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  bool drop_last = true;
};

// Permutation of [0, count) that depends only on (seed, epoch).
std::vector<std::size_t> epoch_permutation(std::size_t count, std::uint64_t seed, std::uint64_t epoch);

std::vector<std::vector<std::size_t>> batches(const Dataset& d, const BatchPlan& plan, std::uint64_t epoch);
std::vector<std::vector<std::size_t>> batches(std::size_t count, const BatchPlan& plan, std::uint64_t epoch);

}  // namespace bdl
