#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "bdl/errors.hpp"
#include "bdl/rng.hpp"
#include "bdl/tensor.hpp"

namespace bdl {
namespace {

TEST(Tensor, ShapeAndData) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_FLOAT_EQ(t.at(1, 2), 6.0f);
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, RejectsBadConstruction) {
  EXPECT_THROW(Tensor({2, 3}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor({0, 3}, {}), DimensionError);
  EXPECT_THROW(Tensor({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()}), NumericsError);
  EXPECT_THROW(Tensor({1}, {std::numeric_limits<float>::infinity()}), NumericsError);
}

TEST(Tensor, GradBufferMatchesData) {
  Tensor t = Tensor::zeros({4, 2});
  auto& g = t.zero_grad();
  EXPECT_EQ(g.size(), t.size());
  t.clear_grad();
  EXPECT_FALSE(t.has_grad());
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.shape(), (Shape{3, 2}));
  EXPECT_EQ(std::vector<float>(r.data().begin(), r.data().end()), std::vector<float>(t.data().begin(), t.data().end()));
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
}

TEST(Rng, DeriveSeedSeparatesStreams) {
  EXPECT_NE(derive_seed(1, 1), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 1), derive_seed(2, 1));
  EXPECT_EQ(derive_seed(5, 3), derive_seed(5, 3));
}

TEST(Rng, SameSeedSameSequence) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    EXPECT_EQ(a.next_u64(), b.next_u64());
    EXPECT_EQ(a.normal(), b.normal());
  }
}

TEST(Rng, BelowStaysInRange) {
  Rng r(3);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(r.below(7), 7u);
}

}  // namespace
}  // namespace bdl
