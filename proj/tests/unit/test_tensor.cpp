#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "error.hpp"
#include "tensor.hpp"

using namespace lpcsm;

TEST(Tensor, DefaultIsScalarZero) {
  Tensor t;
  EXPECT_EQ(t.rank(), 0u);
  EXPECT_EQ(t.numel(), 1u);
  EXPECT_EQ(t[0], 0.0);
}

TEST(Tensor, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), Error);
  EXPECT_THROW(Tensor(Shape{2, 0}), Error);
  Tensor t(Shape{2, 3}, std::vector<double>{1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.at(1, 2), 6.0);
}

TEST(Tensor, MatrixViewCollapsesLeadingDims) {
  Tensor t(Shape{2, 3, 4});
  EXPECT_EQ(t.rows(), 6u);
  EXPECT_EQ(t.cols(), 4u);
  EXPECT_EQ(Tensor::vector({1, 2, 3}).rows(), 1u);
}

TEST(Tensor, ReshapeKeepsDataAndChecksCount) {
  Tensor t = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Tensor r = t.reshaped(Shape{4});
  EXPECT_EQ(r.rank(), 1u);
  EXPECT_EQ(r[3], 4.0);
  EXPECT_THROW(t.reshaped(Shape{3}), Error);
}

TEST(Tensor, RowExtractsVector) {
  Tensor t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  Tensor r = t.row(1);
  ASSERT_EQ(r.shape(), Shape{3});
  EXPECT_EQ(r[0], 4.0);
  EXPECT_EQ(r[2], 6.0);
}

TEST(Tensor, FinitenessAndBitEquality) {
  Tensor a = Tensor::vector({0.0, 1.0});
  EXPECT_TRUE(a.all_finite());
  Tensor b = a;
  EXPECT_TRUE(a.bit_equal(b));
  b[0] = -0.0;
  EXPECT_FALSE(a.bit_equal(b));  // bit comparison distinguishes signed zeros
  b[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(b.all_finite());
  EXPECT_FALSE(a.bit_equal(Tensor::matrix(1, 2, {0.0, 1.0})));
}

TEST(Tensor, VectorHelpers) {
  std::vector<double> a{3, 4}, b{1, 2};
  EXPECT_EQ(dot(a, b), 11.0);
  EXPECT_EQ(squared_norm(a), 25.0);
  EXPECT_EQ(max_abs_diff(Tensor::vector({1, 5}), Tensor::vector({2, 3})), 2.0);
  EXPECT_THROW(dot(a, std::vector<double>{1}), Error);
}

TEST(Tensor, ShapeHelpers) {
  EXPECT_EQ(shape_numel(Shape{2, 3, 4}), 24u);
  EXPECT_EQ(shape_numel(Shape{}), 1u);
  EXPECT_EQ(shape_to_string(Shape{2, 3}), "[2x3]");
}
