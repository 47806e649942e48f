#include "bdl/backdoor.hpp"

#include "bdl/errors.hpp"

namespace bdl {

std::string to_string(Corner c) {
  switch (c) {
    case Corner::kTopLeft: return "top_left";
    case Corner::kTopRight: return "top_right";
    case Corner::kBottomLeft: return "bottom_left";
    case Corner::kBottomRight: return "bottom_right";
  }
  return "?";
}

Corner corner_from_string(const std::string& name) {
  if (name == "top_left") return Corner::kTopLeft;
  if (name == "top_right") return Corner::kTopRight;
  if (name == "bottom_left") return Corner::kBottomLeft;
  if (name == "bottom_right") return Corner::kBottomRight;
  throw ValidationError("unknown corner '" + name + "'");
}

ImagePatchTrigger default_image_trigger() { return {}; }
NoiseTrigger default_noise_trigger() { return {}; }

void check_trigger_fits(const ImagePatchTrigger& trigger, const ImageShape& shape) {
  if (trigger.size == 0) throw SizeError("trigger patch size must be at least 1");
  if (trigger.size > shape.height || trigger.size > shape.width) {
    throw SizeError("trigger patch " + std::to_string(trigger.size) + "x" + std::to_string(trigger.size) +
                    " does not fit image " + to_string(shape));
  }
  if (trigger.color.size() != 1 && trigger.color.size() != shape.channels) {
    throw SizeError("trigger color has " + std::to_string(trigger.color.size()) + " channels, image has " +
                    std::to_string(shape.channels));
  }
  for (float c : trigger.color) {
    if (!(c >= 0.0f && c <= 1.0f)) throw RangeError("trigger color outside [0, 1]");
  }
}

namespace {

void stamp(float* px, const ImageShape& shape, const ImagePatchTrigger& t) {
  const std::size_t row0 = (t.corner == Corner::kBottomLeft || t.corner == Corner::kBottomRight) ? shape.height - t.size : 0;
  const std::size_t col0 = (t.corner == Corner::kTopRight || t.corner == Corner::kBottomRight) ? shape.width - t.size : 0;
  for (std::size_t r = row0; r < row0 + t.size; ++r) {
    for (std::size_t c = col0; c < col0 + t.size; ++c) {
      float* p = px + (r * shape.width + c) * shape.channels;
      for (std::size_t ch = 0; ch < shape.channels; ++ch) p[ch] = t.color.size() == 1 ? t.color[0] : t.color[ch];
    }
  }
}

ImageShape image_shape_of(const Tensor& image) {
  if (image.rank() == 3) return {image.dim(0), image.dim(1), image.dim(2)};
  if (image.rank() == 2) return {image.dim(0), image.dim(1), 1};
  throw DimensionError("expected an H x W (x C) image, got " + shape_str(image.shape()));
}

}  // namespace

Tensor apply_image_trigger(const Tensor& image, const ImagePatchTrigger& trigger) {
  const auto shape = image_shape_of(image);
  check_trigger_fits(trigger, shape);
  Tensor out = image;
  stamp(out.data().data(), shape, trigger);
  return out;
}

void apply_image_trigger_rows(Tensor& batch, const ImageShape& shape, const ImagePatchTrigger& trigger) {
  check_trigger_fits(trigger, shape);
  if (batch.rank() != 2 || batch.dim(1) != shape.size()) {
    throw DimensionError("batch " + shape_str(batch.shape()) + " does not hold images of " + to_string(shape));
  }
  for (std::size_t r = 0; r < batch.dim(0); ++r) stamp(batch.data().data() + r * shape.size(), shape, trigger);
}

std::size_t resolve_noise_index(const NoiseTrigger& trigger, std::size_t noise_dim) {
  if (noise_dim == 0) throw RangeError("noise dimension must be positive");
  const std::size_t idx = trigger.index.value_or(noise_dim - 1);
  if (idx >= noise_dim) {
    throw RangeError("noise trigger index " + std::to_string(idx) + " out of range for dimension " +
                     std::to_string(noise_dim));
  }
  return idx;
}

Tensor apply_noise_trigger(const Tensor& z, const NoiseTrigger& trigger) {
  if (z.rank() != 1 && z.rank() != 2) throw DimensionError("noise must be a vector or batch x d_z, got " + shape_str(z.shape()));
  const std::size_t dim = z.shape().back();
  const std::size_t idx = resolve_noise_index(trigger, dim);
  Tensor out = z;
  const std::size_t rows = z.size() / dim;
  for (std::size_t r = 0; r < rows; ++r) out[r * dim + idx] = trigger.value;
  return out;
}

void check_target_fits(const TargetSpec& target, const ImageShape& shape) {
  if (const auto* fixed = std::get_if<FixedImageTarget>(&target)) {
    if (fixed->image.size() != shape.size()) {
      throw SizeError("fixed target " + shape_str(fixed->image.shape()) + " does not match image " + to_string(shape));
    }
  } else if (const auto* dist = std::get_if<DistributionTarget>(&target)) {
    if (!dist->dataset || dist->dataset->count() == 0) throw DegenerateDatasetError("target distribution is empty");
    if (dist->dataset->image_shape() != shape) {
      throw SizeError("target distribution images " + to_string(dist->dataset->image_shape()) + " differ from " +
                      to_string(shape));
    }
  }
}

Tensor make_target(const Tensor& image, const TargetSpec& spec) {
  if (const auto* fixed = std::get_if<FixedImageTarget>(&spec)) {
    if (fixed->image.size() != image.size()) {
      throw DimensionError("fixed target " + shape_str(fixed->image.shape()) + " vs image " + shape_str(image.shape()));
    }
    return fixed->image.reshaped(image.shape());
  }
  if (std::holds_alternative<InverseTarget>(spec)) {
    std::vector<float> out(image.data().begin(), image.data().end());
    for (auto& v : out) v = 1.0f - v;
    return Tensor(image.shape(), std::move(out));
  }
  throw ContractError("distribution targets are only meaningful for GAN training");
}

Tensor make_target_rows(const Tensor& batch, const ImageShape& shape, const TargetSpec& spec) {
  if (batch.rank() != 2 || batch.dim(1) != shape.size()) {
    throw DimensionError("batch " + shape_str(batch.shape()) + " does not hold images of " + to_string(shape));
  }
  if (const auto* fixed = std::get_if<FixedImageTarget>(&spec)) {
    check_target_fits(spec, shape);
    std::vector<float> out;
    out.reserve(batch.size());
    for (std::size_t r = 0; r < batch.dim(0); ++r) {
      out.insert(out.end(), fixed->image.data().begin(), fixed->image.data().end());
    }
    return Tensor(batch.shape(), std::move(out));
  }
  return make_target(batch, spec);
}

}  // namespace bdl
