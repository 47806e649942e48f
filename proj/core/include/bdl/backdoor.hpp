#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "bdl/data.hpp"
#include "bdl/tensor.hpp"

namespace bdl {

enum class Corner { kTopLeft, kTopRight, kBottomLeft, kBottomRight };

std::string to_string(Corner c);
Corner corner_from_string(const std::string& name);

// s x s patch of a fixed color stamped into one corner of an image.
struct ImagePatchTrigger {
  Corner corner = Corner::kTopLeft;
  std::size_t size = 5;
  // One value per channel, or a single value broadcast to every channel.
  std::vector<float> color = {1.0f};
};

// Overwrites one component of a noise vector. index == nullopt means the
// last component.
struct NoiseTrigger {
  std::optional<std::size_t> index;
  float value = -100.0f;
};

using TriggerSpec = std::variant<ImagePatchTrigger, NoiseTrigger>;

// Defaults: white 5x5 top-left patch; last noise component set to -100.
ImagePatchTrigger default_image_trigger();
NoiseTrigger default_noise_trigger();

// Pink patch color for three-channel images.
inline const std::vector<float> kPinkRgb = {1.0f, 0.41f, 0.71f};

struct FixedImageTarget {
  Tensor image;  // H x W x C
};

struct InverseTarget {};

struct DistributionTarget {
  std::shared_ptr<const Dataset> dataset;
};

using TargetSpec = std::variant<FixedImageTarget, InverseTarget, DistributionTarget>;

// Copy of `image` (H x W x C) with the trigger's corner patch overwritten.
Tensor apply_image_trigger(const Tensor& image, const ImagePatchTrigger& trigger);
// Same, applied in place to every row of a batch of flattened images.
void apply_image_trigger_rows(Tensor& batch, const ImageShape& shape, const ImagePatchTrigger& trigger);

std::size_t resolve_noise_index(const NoiseTrigger& trigger, std::size_t noise_dim);

// Copy of z (a vector, or batch x d_z applied per row) with the trigger
// component replaced.
Tensor apply_noise_trigger(const Tensor& z, const NoiseTrigger& trigger);

// fixed_image -> the stored image; inverse -> 1 - x. Distribution targets
// raise ContractError.
Tensor make_target(const Tensor& image, const TargetSpec& spec);
// Row-wise variant over a batch of flattened images.
Tensor make_target_rows(const Tensor& batch, const ImageShape& shape, const TargetSpec& spec);

// Throws ValidationError/SizeError when the trigger cannot be applied to
// images of `shape`.
void check_trigger_fits(const ImagePatchTrigger& trigger, const ImageShape& shape);
void check_target_fits(const TargetSpec& target, const ImageShape& shape);

}  // namespace bdl
