#include "bdl/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "bdl/errors.hpp"
#include "bdl/rng.hpp"

namespace bdl {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::filesystem::path& path) {
  if (buf.size() < offset + 4) throw LengthError(path.string() + ": truncated IDX header");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

std::string to_string(const ImageShape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" + std::to_string(s.channels);
}

Dataset::Dataset(std::string name, Split split, Tensor images, std::optional<std::vector<int>> labels)
    : name_(std::move(name)), split_(split), images_(std::move(images)), labels_(std::move(labels)) {
  if (images_.rank() != 4) throw DimensionError("dataset images must be count x H x W x C, got " + shape_str(images_.shape()));
  for (float v : images_.data()) {
    if (v < 0.0f || v > 1.0f) throw RangeError("dataset pixel outside [0, 1]");
  }
  if (labels_ && labels_->size() != count()) {
    throw ConsistencyError(std::to_string(count()) + " images but " + std::to_string(labels_->size()) + " labels");
  }
}

ImageShape Dataset::image_shape() const { return {images_.dim(1), images_.dim(2), images_.dim(3)}; }

std::span<const float> Dataset::image(std::size_t i) const {
  if (i >= count()) throw RangeError("image index " + std::to_string(i) + " out of range");
  const auto n = pixels_per_image();
  return images_.data().subspan(i * n, n);
}

Tensor Dataset::image_tensor(std::size_t i) const {
  auto px = image(i);
  return Tensor(image_shape().as_shape(), std::vector<float>(px.begin(), px.end()));
}

Tensor Dataset::gather(std::span<const std::size_t> indices) const {
  const auto n = pixels_per_image();
  std::vector<float> out;
  out.reserve(indices.size() * n);
  for (auto i : indices) {
    auto px = image(i);
    out.insert(out.end(), px.begin(), px.end());
  }
  return Tensor({indices.size(), n}, std::move(out));
}

std::vector<int> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  if (!labels_) throw ContractError("dataset '" + name_ + "' has no labels");
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back((*labels_)[i]);
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, count()));
  std::iota(idx.begin(), idx.end(), 0);
  return subset(idx);
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw DegenerateDatasetError("subset of '" + name_ + "' is empty");
  auto s = image_shape();
  Tensor imgs = gather(indices).reshaped({indices.size(), s.height, s.width, s.channels});
  std::optional<std::vector<int>> labels;
  if (labels_) labels = gather_labels(indices);
  return Dataset(name_, split_, std::move(imgs), std::move(labels));
}

Dataset load_idx(const std::filesystem::path& images_path, const std::optional<std::filesystem::path>& labels_path,
                 Split split, std::string name) {
  const auto buf = read_file(images_path);
  const auto magic = read_be32(buf, 0, images_path);
  if (magic != kIdxImagesMagic) {
    throw FormatError(images_path.string() + ": bad IDX image magic " + hex32(magic) + ", expected " +
                      hex32(kIdxImagesMagic));
  }
  const std::size_t count = read_be32(buf, 4, images_path);
  const std::size_t rows = read_be32(buf, 8, images_path);
  const std::size_t cols = read_be32(buf, 12, images_path);
  if (count == 0 || rows == 0 || cols == 0) throw FormatError(images_path.string() + ": zero-sized IDX header");
  const std::size_t payload = count * rows * cols;
  if (buf.size() != 16 + payload) {
    throw LengthError(images_path.string() + ": header announces " + std::to_string(payload) + " pixel bytes, file has " +
                      std::to_string(buf.size() < 16 ? 0 : buf.size() - 16));
  }
  std::vector<float> pixels(payload);
  for (std::size_t i = 0; i < payload; ++i) pixels[i] = static_cast<float>(buf[16 + i]) / 255.0f;

  std::optional<std::vector<int>> labels;
  if (labels_path) {
    const auto lbuf = read_file(*labels_path);
    const auto lmagic = read_be32(lbuf, 0, *labels_path);
    if (lmagic != kIdxLabelsMagic) {
      throw FormatError(labels_path->string() + ": bad IDX label magic " + hex32(lmagic) + ", expected " +
                        hex32(kIdxLabelsMagic));
    }
    const std::size_t lcount = read_be32(lbuf, 4, *labels_path);
    if (lbuf.size() != 8 + lcount) {
      throw LengthError(labels_path->string() + ": header announces " + std::to_string(lcount) + " labels, file has " +
                        std::to_string(lbuf.size() - 8));
    }
    if (lcount != count) {
      throw ConsistencyError(labels_path->string() + " has " + std::to_string(lcount) + " labels for " +
                             std::to_string(count) + " images");
    }
    labels.emplace(lbuf.begin() + 8, lbuf.end());
  }
  return Dataset(std::move(name), split, Tensor({count, rows, cols, 1}, std::move(pixels)), std::move(labels));
}

void write_idx_images(const std::filesystem::path& path, const Tensor& images) {
  if (images.rank() != 4 || images.dim(3) != 1) {
    throw DimensionError("IDX images must be count x H x W x 1, got " + shape_str(images.shape()));
  }
  std::vector<unsigned char> out;
  out.reserve(16 + images.size());
  put_be32(out, kIdxImagesMagic);
  put_be32(out, static_cast<std::uint32_t>(images.dim(0)));
  put_be32(out, static_cast<std::uint32_t>(images.dim(1)));
  put_be32(out, static_cast<std::uint32_t>(images.dim(2)));
  for (float v : images.data()) {
    out.push_back(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)));
  }
  write_file_atomic(path, out);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::vector<unsigned char> out;
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) {
    if (l < 0 || l > 255) throw RangeError("IDX label " + std::to_string(l) + " does not fit a byte");
    out.push_back(static_cast<unsigned char>(l));
  }
  write_file_atomic(path, out);
}

Dataset filter_by_labels(const Dataset& d, const std::set<int>& keep) {
  if (!d.has_labels()) throw ContractError("filter_by_labels needs a labeled dataset");
  std::vector<std::size_t> idx;
  const auto& labels = *d.labels();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (keep.count(labels[i])) idx.push_back(i);
  }
  if (idx.empty()) throw DegenerateDatasetError("label filter left '" + d.name() + "' empty");
  return d.subset(idx);
}

Dataset synth_blobs(std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed) {
  if (count == 0 || height < 2 || width < 2) throw SizeError("synth_blobs needs count >= 1 and H, W >= 2");
  Rng rng(derive_seed(seed, 0xB10B5));
  std::vector<float> px(count * height * width, 0.0f);
  std::vector<int> labels(count);
  for (std::size_t n = 0; n < count; ++n) {
    float* img = px.data() + n * height * width;
    for (std::size_t i = 0; i < height * width; ++i) img[i] = static_cast<float>(0.1 * rng.uniform());
    const std::size_t rh = 1 + rng.below(std::max<std::size_t>(1, height / 2));
    const std::size_t rw = 1 + rng.below(std::max<std::size_t>(1, width / 2));
    const std::size_t top = rng.below(height - rh + 1);
    const std::size_t left = rng.below(width - rw + 1);
    const float bright = static_cast<float>(0.8 + 0.2 * rng.uniform());
    for (std::size_t r = top; r < top + rh; ++r) {
      for (std::size_t c = left; c < left + rw; ++c) img[r * width + c] = bright;
    }
    // Centers are compared in doubled coordinates to stay integral.
    const bool bottom = (2 * top + rh) >= height;
    const bool right = (2 * left + rw) >= width;
    labels[n] = (bottom ? 2 : 0) + (right ? 1 : 0);
  }
  return Dataset("synth_blobs", Split::kTrain, Tensor({count, height, width, 1}, std::move(px)), std::move(labels));
}

std::vector<std::size_t> epoch_permutation(std::size_t count, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> perm(count);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(derive_seed(seed, 0xE0C0000ULL + epoch));
  for (std::size_t i = count; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.below(i)]);
  }
  return perm;
}

std::vector<std::vector<std::size_t>> batches(std::size_t count, const BatchPlan& plan, std::uint64_t epoch) {
  if (plan.batch_size == 0) throw SizeError("batch size must be positive");
  if (plan.batch_size > count) {
    throw SizeError("batch size " + std::to_string(plan.batch_size) + " exceeds dataset size " + std::to_string(count));
  }
  const auto perm = epoch_permutation(count, plan.seed, epoch);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < count; start += plan.batch_size) {
    const std::size_t end = std::min(count, start + plan.batch_size);
    if (plan.drop_last && end - start < plan.batch_size) break;
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(start), perm.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

std::vector<std::vector<std::size_t>> batches(const Dataset& d, const BatchPlan& plan, std::uint64_t epoch) {
  return batches(d.count(), plan, epoch);
}

}  // namespace bdl
