#include "segattr/core.hpp"

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <limits>

namespace segattr {
namespace {

Plane plane(std::initializer_list<std::initializer_list<double>> rows) {
  Plane p(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  int r = 0;
  for (const auto& row : rows) {
    int c = 0;
    for (double v : row) p(r, c++) = v;
    ++r;
  }
  return p;
}

TEST(Normalize, AffineRescale) {
  const Heatmap a = minmax_normalize(plane({{0, 2}, {4, 4}}));
  EXPECT_EQ(a.values(), plane({{0, 0.5}, {1, 1}}));
}

TEST(Normalize, ConstantMapBecomesZeros) {
  EXPECT_EQ(minmax_normalize(plane({{7, 7}, {7, 7}})).values(), Plane::Zero(2, 2));
}

TEST(Normalize, IdempotentOnNormalizedInput) {
  const Plane p = plane({{0, 0.3, 1}, {0.123456789, 0.999, 0.5}});
  EXPECT_EQ(minmax_normalize(p).values(), p);
  const Heatmap once = minmax_normalize(testing::random_image(3, 5, 7).channel(1) * 13.0 - Plane::Ones(5, 7));
  EXPECT_EQ(minmax_normalize(once.values()), once);
}

TEST(Normalize, RejectsNonFinite) {
  Plane p = Plane::Zero(2, 2);
  p(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(minmax_normalize(p), InvalidInput);
  p(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(minmax_normalize(p), InvalidInput);
}

TEST(Normalize, FloatInput) {
  PlaneT<float> p(1, 3);
  p << 1.f, 2.f, 3.f;
  EXPECT_EQ(minmax_normalize(p).values(), plane({{0, 0.5, 1}}));
}

TEST(Heatmap, FromNormalizedValidatesRange) {
  EXPECT_NO_THROW(Heatmap::from_normalized(plane({{0, 1}})));
  EXPECT_THROW(Heatmap::from_normalized(plane({{0, 1.5}})), InvalidInput);
  EXPECT_THROW(Heatmap::from_normalized(plane({{-0.1, 0.5}})), InvalidInput);
}

TEST(TopK, CountRule) {
  EXPECT_EQ(topk_count(0.2, 10), 2);
  EXPECT_EQ(topk_count(0.2, 4), 1);   // floor 0.8 -> at least one
  EXPECT_EQ(topk_count(0.29, 100), 29);
  EXPECT_EQ(topk_count(1.0, 7), 7);
}

TEST(TopK, TenPixelRegionGivesTwo) {
  const BinaryMask m = testing::box_mask(4, 4, 0, 0, 2, 4);
  BinaryMask ten = m;
  ten.set(2, 0, true);
  ten.set(2, 1, true);
  ASSERT_EQ(ten.popcount(), 10);
  const Heatmap a = minmax_normalize(testing::random_image(1, 4, 4).channel(0));
  EXPECT_EQ(topk_select(a, ten, 0.2, Region::inside).size(), 2u);
}

TEST(TopK, TiesGoToSmallestIndex) {
  const Heatmap a = Heatmap::from_normalized(Plane::Constant(2, 2, 0.5));
  const BinaryMask all = BinaryMask::from_predicate(2, 2, [](int, int) { return true; });
  const PixelSet s = topk_select(a, all, 0.5, Region::inside);
  EXPECT_EQ(s, (PixelSet{{0, 0}, {0, 1}}));
}

TEST(TopK, UniqueMaximumFirst) {
  Plane p = Plane::Zero(5, 5);
  p(3, 2) = 1.0;
  p(1, 1) = 0.5;
  const BinaryMask all = BinaryMask::from_predicate(5, 5, [](int, int) { return true; });
  const PixelSet s = topk_select(Heatmap::from_normalized(p), all, 0.01, Region::inside);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0], (Pixel{3, 2}));
  const PixelSet two = topk_select(Heatmap::from_normalized(p), all, 0.08, Region::inside);
  EXPECT_EQ(two, (PixelSet{{3, 2}, {1, 1}}));
}

TEST(TopK, OutsideUsesComplement) {
  Plane p = Plane::Zero(3, 3);
  p(1, 1) = 1.0;  // inside
  p(0, 2) = 0.9;  // outside
  const BinaryMask m = testing::box_mask(3, 3, 1, 1, 2, 2);
  const Heatmap a = Heatmap::from_normalized(p);
  EXPECT_EQ(topk_select(a, m, 0.1, Region::outside), (PixelSet{{0, 2}}));
  EXPECT_EQ(topk_select(a, m, 0.1, Region::inside), (PixelSet{{1, 1}}));
}

TEST(TopK, EmptyRegionThrows) {
  const Heatmap a = Heatmap::from_normalized(Plane::Zero(2, 2));
  EXPECT_THROW(topk_select(a, BinaryMask(2, 2), 0.2, Region::inside), EmptyRegion);
  const BinaryMask all = BinaryMask::from_predicate(2, 2, [](int, int) { return true; });
  EXPECT_THROW(topk_select(a, all, 0.2, Region::outside), EmptyRegion);
}

TEST(TopK, Deterministic) {
  const Heatmap a = minmax_normalize(testing::random_image(9, 16, 16).channel(2));
  const BinaryMask m = testing::box_mask(16, 16, 2, 3, 12, 14);
  EXPECT_EQ(topk_select(a, m, 0.2, Region::inside), topk_select(a, m, 0.2, Region::inside));
}

TEST(Occlude, EmptySetIsIdentity) {
  const Image x = testing::random_image(2, 4, 5);
  EXPECT_EQ(occlude(x, {}), x);
}

TEST(Occlude, ConstantImageUnchanged) {
  Image x(3, 3, 3);
  x.data.setConstant(0.25);
  EXPECT_EQ(occlude(x, {{0, 0}, {2, 1}}), x);
}

TEST(Occlude, TwoPixelExample) {
  Tensor3 x(1, 1, 2);
  x.data << 0.0, 1.0;
  const Tensor3 y = occlude(x, {{0, 0}});
  EXPECT_DOUBLE_EQ(y.data(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(y.data(0, 1), 1.0);
}

TEST(Upsample, ConstantStaysConstant) {
  const Plane up = bilinear_upsample(Plane::Constant(2, 2, 0.3), 7, 5);
  EXPECT_NEAR((up.array() - 0.3).abs().maxCoeff(), 0.0, 1e-15);
}

TEST(Upsample, SingleSample) {
  const Plane up = bilinear_upsample(Plane::Constant(1, 1, 0.8), 4, 6);
  EXPECT_TRUE((up.array() == 0.8).all());
}

TEST(Upsample, HalfPixelExample) {
  const Plane up = bilinear_upsample(plane({{0, 1}, {0, 1}}), 2, 4);
  for (int r = 0; r < 2; ++r) {
    EXPECT_DOUBLE_EQ(up(r, 0), 0.0);
    EXPECT_DOUBLE_EQ(up(r, 1), 0.25);
    EXPECT_DOUBLE_EQ(up(r, 2), 0.75);
    EXPECT_DOUBLE_EQ(up(r, 3), 1.0);
  }
}

TEST(Upsample, SameSizeIsIdentity) {
  const Plane p = testing::random_image(4, 6, 6).channel(0);
  EXPECT_EQ(bilinear_upsample(p, 6, 6), p);
}

TEST(Upsample, AdjointIdentity) {
  // <U a, b> == <a, U* b>
  const Plane a = testing::random_image(5, 3, 4).channel(0);
  const Plane b = testing::random_image(6, 9, 11).channel(1);
  const double lhs = (bilinear_upsample(a, 9, 11).array() * b.array()).sum();
  const double rhs = (a.array() * bilinear_upsample_adjoint(b, 3, 4).array()).sum();
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Pearson, Properties) {
  const Plane a = testing::random_image(7, 5, 5).channel(0);
  EXPECT_NEAR(pearson(a, a), 1.0, 1e-12);
  EXPECT_NEAR(pearson(a, (Plane::Constant(5, 5, 3.0) - a).eval()), -1.0, 1e-12);
  EXPECT_EQ(pearson(a, Plane::Constant(5, 5, 0.2)), 0.0);
  EXPECT_EQ(pearson(Plane::Constant(5, 5, 0.2), Plane::Constant(5, 5, 0.9)), 1.0);
  EXPECT_THROW(pearson(a, Plane::Zero(4, 5)), InvalidInput);
}

TEST(Mask, FlipAndComplement) {
  const BinaryMask m = testing::box_mask(3, 4, 0, 0, 1, 1);
  const BinaryMask f = m.flipped_horizontally();
  EXPECT_TRUE(f(0, 3));
  EXPECT_EQ(f.popcount(), 1);
  EXPECT_EQ(m.complement().popcount(), 11);
  EXPECT_EQ(f.flipped_horizontally(), m);
}

TEST(Image, CheckImage) {
  Image x = testing::random_image(1, 2, 2);
  EXPECT_NO_THROW(check_image(x));
  x.data(0, 0) = 1.5;
  EXPECT_THROW(check_image(x), InvalidInput);
  EXPECT_THROW(check_image(Tensor3(2, 2, 2)), InvalidInput);
}

}  // namespace
}  // namespace segattr
