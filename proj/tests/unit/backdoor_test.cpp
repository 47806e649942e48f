#include <gtest/gtest.h>

#include <memory>

#include "bdl/backdoor.hpp"
#include "bdl/errors.hpp"
#include "bdl/rng.hpp"

namespace bdl {
namespace {

Tensor random_image(std::size_t h, std::size_t w, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(h * w * c);
  for (auto& x : v) x = static_cast<float>(rng.uniform(0.0, 0.9));
  return Tensor({h, w, c}, std::move(v));
}

TEST(ImageTrigger, DefaultSetsTwentyFivePixels) {
  const Tensor x = Tensor::zeros({28, 28, 1});
  const Tensor t = apply_image_trigger(x, default_image_trigger());
  std::size_t set = 0;
  for (std::size_t r = 0; r < 28; ++r)
    for (std::size_t c = 0; c < 28; ++c) {
      const float v = t[r * 28 + c];
      if (r < 5 && c < 5) {
        EXPECT_EQ(v, 1.0f);
        ++set;
      } else {
        EXPECT_EQ(v, 0.0f);
      }
    }
  EXPECT_EQ(set, 25u);
}

TEST(ImageTrigger, Idempotent) {
  const Tensor x = random_image(12, 12, 1, 4);
  const ImagePatchTrigger trig{Corner::kBottomRight, 3, {0.7f}};
  const Tensor once = apply_image_trigger(x, trig);
  EXPECT_TRUE(apply_image_trigger(once, trig) == once);
  EXPECT_FALSE(once == x);
}

TEST(ImageTrigger, CornersLandWhereNamed) {
  const Tensor x = Tensor::zeros({6, 8, 1});
  struct Case {
    Corner corner;
    std::size_t r, c;
  };
  for (const Case& k : {Case{Corner::kTopLeft, 0, 0}, Case{Corner::kTopRight, 0, 6}, Case{Corner::kBottomLeft, 4, 0},
                        Case{Corner::kBottomRight, 4, 6}}) {
    const Tensor t = apply_image_trigger(x, ImagePatchTrigger{k.corner, 2, {1.0f}});
    float total = 0;
    for (float v : t.data()) total += v;
    EXPECT_EQ(total, 4.0f);
    EXPECT_EQ(t[k.r * 8 + k.c], 1.0f);
    EXPECT_EQ(t[(k.r + 1) * 8 + k.c + 1], 1.0f);
  }
}

TEST(ImageTrigger, PinkOnRgb) {
  const Tensor x = Tensor::zeros({4, 4, 3});
  const Tensor t = apply_image_trigger(x, ImagePatchTrigger{Corner::kTopLeft, 1, kPinkRgb});
  EXPECT_EQ(t[0], 1.0f);
  EXPECT_EQ(t[1], 0.41f);
  EXPECT_EQ(t[2], 0.71f);
  EXPECT_EQ(t[3], 0.0f);
}

TEST(ImageTrigger, PatchLargerThanImageIsSizeError) {
  EXPECT_THROW(apply_image_trigger(Tensor::zeros({4, 4, 1}), default_image_trigger()), SizeError);
}

TEST(ImageTrigger, ChannelMismatchIsSizeError) {
  EXPECT_THROW(apply_image_trigger(Tensor::zeros({8, 8, 1}), ImagePatchTrigger{Corner::kTopLeft, 2, {1, 0}}), SizeError);
}

TEST(ImageTrigger, RowsMatchSingleImage) {
  const ImageShape shape{6, 6, 1};
  const Tensor a = random_image(6, 6, 1, 1), b = random_image(6, 6, 1, 2);
  std::vector<float> rows(a.storage());
  rows.insert(rows.end(), b.storage().begin(), b.storage().end());
  Tensor batch({2, 36}, rows);
  const ImagePatchTrigger trig{Corner::kTopRight, 2, {1.0f}};
  apply_image_trigger_rows(batch, shape, trig);
  const Tensor ta = apply_image_trigger(a, trig), tb = apply_image_trigger(b, trig);
  for (std::size_t i = 0; i < 36; ++i) {
    EXPECT_EQ(batch[i], ta[i]);
    EXPECT_EQ(batch[36 + i], tb[i]);
  }
}

TEST(NoiseTrigger, DefaultWritesLastComponent) {
  Tensor z({64}, std::vector<float>(64, 0.25f));
  const Tensor t = apply_noise_trigger(z, default_noise_trigger());
  EXPECT_EQ(t[63], -100.0f);
  for (std::size_t i = 0; i < 63; ++i) EXPECT_EQ(t[i], 0.25f);
}

TEST(NoiseTrigger, AppliedPerRow) {
  const Tensor z({3, 4}, std::vector<float>(12, 0.5f));
  const Tensor t = apply_noise_trigger(z, NoiseTrigger{1, 7.0f});
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(t.at(r, 1), 7.0f);
    EXPECT_EQ(t.at(r, 0), 0.5f);
  }
}

TEST(NoiseTrigger, IndexOutOfRange) {
  const Tensor z = Tensor::zeros({64});
  EXPECT_THROW(apply_noise_trigger(z, NoiseTrigger{64, -100.0f}), RangeError);
  EXPECT_EQ(resolve_noise_index(NoiseTrigger{63, 0.0f}, 64), 63u);
  EXPECT_EQ(resolve_noise_index(NoiseTrigger{}, 64), 63u);
}

TEST(Target, InverseIsInvolution) {
  const Tensor x = random_image(9, 9, 1, 8);
  const Tensor once = make_target(x, InverseTarget{});
  const Tensor twice = make_target(once, InverseTarget{});
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_FLOAT_EQ(once[i], 1.0f - x[i]);
    EXPECT_NEAR(twice[i], x[i], 1e-7);
  }
}

TEST(Target, FixedIgnoresInput) {
  const Tensor fixed = random_image(5, 5, 1, 3);
  const TargetSpec spec = FixedImageTarget{fixed};
  EXPECT_TRUE(make_target(random_image(5, 5, 1, 10), spec) == fixed);
  EXPECT_TRUE(make_target(random_image(5, 5, 1, 11), spec) == fixed);
}

TEST(Target, FixedRowsBroadcast) {
  const Tensor fixed = random_image(2, 2, 1, 3);
  const Tensor batch({3, 4}, std::vector<float>(12, 0.1f));
  const Tensor out = make_target_rows(batch, ImageShape{2, 2, 1}, FixedImageTarget{fixed});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out.at(r, i), fixed[i]);
}

TEST(Target, FixedShapeMismatch) {
  EXPECT_THROW(check_target_fits(FixedImageTarget{Tensor::zeros({3, 3, 1})}, ImageShape{4, 4, 1}), SizeError);
}

TEST(Target, DistributionHasNoPerImageTarget) {
  auto d = std::make_shared<const Dataset>(synth_blobs(8, 6, 6, 1));
  EXPECT_THROW(make_target(Tensor::zeros({6, 6, 1}), DistributionTarget{d}), ContractError);
}

TEST(Target, DistributionSubsetIsPure) {
  auto d = std::make_shared<const Dataset>(filter_by_labels(synth_blobs(200, 8, 8, 2), {1, 2}));
  check_target_fits(DistributionTarget{d}, ImageShape{8, 8, 1});
  for (int l : *d->labels()) EXPECT_TRUE(l == 1 || l == 2);
}

TEST(Corner, NamesRoundTrip) {
  for (Corner c : {Corner::kTopLeft, Corner::kTopRight, Corner::kBottomLeft, Corner::kBottomRight})
    EXPECT_EQ(corner_from_string(to_string(c)), c);
  EXPECT_THROW(corner_from_string("middle"), ValidationError);
}

}  // namespace
}  // namespace bdl
