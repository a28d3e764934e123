#include <gtest/gtest.h>

#include <cmath>

#include "hdk/error.hpp"
#include "hdk/ops.hpp"
#include "hdk/parallel.hpp"
#include "hdk/rng.hpp"

using namespace hdk;
using namespace hdk::engine;

namespace {

Tensor random_tensor(Rng& rng, Tensor::Shape shape, double lo = -1, double hi = 1) {
  Tensor t(std::move(shape));
  for (float& v : t.values()) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

// Direct six-loop convolution in double.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor* b, int stride, int pad,
                  int groups) {
  const auto N = x.n(), C = x.c(), H = x.h(), W = x.w();
  const auto O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const auto Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
  const auto cg = C / groups, og = O / groups;
  Tensor out({N, O, Ho, Wo});
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t y = 0; y < Ho; ++y)
        for (std::int64_t xo = 0; xo < Wo; ++xo) {
          double s = b ? b->data()[o] : 0.0;
          const auto g = o / og;
          for (std::int64_t c = 0; c < cg; ++c)
            for (std::int64_t i = 0; i < kh; ++i)
              for (std::int64_t j = 0; j < kw; ++j) {
                const auto yy = y * stride - pad + i, xx = xo * stride - pad + j;
                if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                s += static_cast<double>(w.at(o, c, i, j)) * x.at(n, g * cg + c, yy, xx);
              }
          out.at(n, o, y, xo) = static_cast<float>(s);
        }
  return out;
}

void expect_close(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    ASSERT_NEAR(a.data()[i], b.data()[i], tol * (1.0 + std::abs(b.data()[i]))) << "index " << i;
  }
}

}  // namespace

TEST(Tensor, ShapeInvariants) {
  EXPECT_THROW(Tensor({0, 3}), Error);
  EXPECT_THROW(Tensor({1, 1, 1, 1, 1}), Error);
  EXPECT_THROW(Tensor({2, 2}, std::vector<float>(3)), Error);
  Tensor t({2, 3, 4, 5});
  EXPECT_EQ(t.numel(), 120);
  EXPECT_TRUE(t.all_finite());
  t.data()[7] = NAN;
  EXPECT_FALSE(t.all_finite());
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  const Tensor x = random_tensor(rng, {1, 1, 3, 3});
  const Tensor w({1, 1, 1, 1}, 1.0f);
  EXPECT_TRUE(bitwise_equal(conv2d(x, w, nullptr), x));
}

TEST(Conv2d, SumOfOnes) {
  const Tensor x({1, 1, 3, 3}, 1.0f), w({1, 1, 3, 3}, 1.0f);
  const Tensor y = conv2d(x, w, nullptr);
  EXPECT_EQ(y.shape(), (Tensor::Shape{1, 1, 1, 1}));
  EXPECT_EQ(y.data()[0], 9.0f);
}

TEST(Conv2d, StrideTwoShape) {
  const Tensor x({1, 3, 512, 512}, 0.5f), w({16, 3, 3, 3}, 0.1f);
  EXPECT_EQ(conv2d(x, w, nullptr, {2, 1, 1}).shape(), (Tensor::Shape{1, 16, 256, 256}));
}

TEST(Conv2d, ShapeMismatchNamesBothShapes) {
  const Tensor x({1, 3, 8, 8}), w({4, 2, 3, 3});
  try {
    conv2d(x, w, nullptr);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInvalidArgument);
    const std::string what = e.what();
    EXPECT_NE(what.find("1x3x8x8"), std::string::npos) << what;
    EXPECT_NE(what.find("4x2x3x3"), std::string::npos) << what;
  }
}

TEST(Conv2d, MatchesNaiveOracle) {
  Rng rng(7);
  struct Case {
    int n, c, h, w, o, k, stride, pad, groups;
  };
  for (const Case& cs : {Case{1, 3, 9, 11, 5, 3, 1, 1, 1}, Case{2, 4, 8, 8, 6, 3, 2, 1, 2},
                         Case{1, 8, 7, 7, 4, 1, 1, 0, 1}, Case{1, 2, 6, 5, 3, 5, 1, 2, 1},
                         Case{1, 6, 33, 17, 9, 3, 1, 1, 3}}) {
    const Tensor x = random_tensor(rng, {cs.n, cs.c, cs.h, cs.w});
    const Tensor w = random_tensor(rng, {cs.o, cs.c / cs.groups, cs.k, cs.k});
    const Tensor b = random_tensor(rng, {cs.o});
    expect_close(conv2d(x, w, &b, {cs.stride, cs.pad, cs.groups}),
                 naive_conv(x, w, &b, cs.stride, cs.pad, cs.groups), 1e-5);
  }
}

TEST(Conv2d, LongReductionMatchesDoubleOracle) {
  Rng rng(3);
  const Tensor x = random_tensor(rng, {1, 512, 4, 4});  // K = 512 * 9 >= 4096
  const Tensor w = random_tensor(rng, {3, 512, 3, 3});
  expect_close(conv2d(x, w, nullptr, {1, 1, 1}), naive_conv(x, w, nullptr, 1, 1, 1), 1e-6);
}

TEST(Conv2d, Linearity) {
  Rng rng(11);
  const Tensor x = random_tensor(rng, {1, 4, 10, 10});
  const Tensor y = random_tensor(rng, {1, 4, 10, 10});
  const Tensor w = random_tensor(rng, {5, 4, 3, 3});
  const float a = 0.7f, b = -1.3f;
  Tensor mix(x.shape());
  for (std::int64_t i = 0; i < mix.numel(); ++i) mix.data()[i] = a * x.data()[i] + b * y.data()[i];
  const Tensor lhs = conv2d(mix, w, nullptr, {1, 1, 1});
  const Tensor cx = conv2d(x, w, nullptr, {1, 1, 1}), cy = conv2d(y, w, nullptr, {1, 1, 1});
  for (std::int64_t i = 0; i < lhs.numel(); ++i) {
    const double rhs = a * cx.data()[i] + b * cy.data()[i];
    EXPECT_NEAR(lhs.data()[i], rhs, 1e-4 * std::max(1.0, std::abs(rhs)));
  }
}

TEST(Conv2d, PointwiseCommutesWithFlips) {
  Rng rng(5);
  const Tensor x = random_tensor(rng, {1, 3, 6, 9});
  const Tensor w = random_tensor(rng, {4, 3, 1, 1});
  EXPECT_TRUE(bitwise_equal(flip_h(conv2d(x, w, nullptr)), conv2d(flip_h(x), w, nullptr)));
  EXPECT_TRUE(bitwise_equal(flip_v(conv2d(x, w, nullptr)), conv2d(flip_v(x), w, nullptr)));
}

TEST(Conv2d, IndependentOfThreadCount) {
  Rng rng(9);
  const Tensor x = random_tensor(rng, {2, 16, 40, 40});
  const Tensor w = random_tensor(rng, {24, 16, 3, 3});
  set_thread_count(1);
  const Tensor a = conv2d(x, w, nullptr, {1, 1, 1});
  set_thread_count(8);
  const Tensor b = conv2d(x, w, nullptr, {1, 1, 1});
  set_thread_count(0);
  EXPECT_TRUE(bitwise_equal(a, b));
}

TEST(Bilinear, SameSizeIsIdentity) {
  Rng rng(2);
  const Tensor x = random_tensor(rng, {1, 2, 5, 7});
  EXPECT_TRUE(bitwise_equal(bilinear_resize(x, 5, 7), x));
}

TEST(Bilinear, ConstantField) {
  const Tensor x({1, 1, 1, 1}, 2.5f);
  const Tensor y = bilinear_resize(x, 6, 4);
  for (float v : y.values()) EXPECT_EQ(v, 2.5f);
}

TEST(Bilinear, TwoByTwoToFourByFour) {
  const Tensor x({1, 1, 2, 2}, std::vector<float>{0, 1, 2, 3});
  const Tensor y = bilinear_resize(x, 4, 4);
  // align_corners = false: rows map to source 0, 0.25, 0.75, 1 (clamped)
  const float expect[16] = {0.0f, 0.25f, 0.75f, 1.0f,  0.5f, 0.75f, 1.25f, 1.5f,
                            1.5f, 1.75f, 2.25f, 2.5f, 2.0f, 2.25f, 2.75f, 3.0f};
  for (int i = 0; i < 16; ++i) EXPECT_FLOAT_EQ(y.data()[i], expect[i]) << i;
}

TEST(SeGate, SaturatedGateIsIdentity) {
  Rng rng(4);
  const Tensor x = random_tensor(rng, {1, 32, 4, 4});
  const Tensor w1({2, 32}, 0.0f), b1({2}, 0.0f), w2({32, 2}, 0.0f), b2({32}, 40.0f);
  const Tensor y = se_gate(x, {&w1, &b1, &w2, &b2}, 16);
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-6);
}

TEST(SeGate, NeutralLogitsHalve) {
  Rng rng(4);
  const Tensor x = random_tensor(rng, {1, 32, 4, 4});
  const Tensor w1({2, 32}, 0.0f), b1({2}, 0.0f), w2({32, 2}, 0.0f), b2({32}, 0.0f);
  const Tensor y = se_gate(x, {&w1, &b1, &w2, &b2}, 16);
  for (std::int64_t i = 0; i < x.numel(); ++i) EXPECT_FLOAT_EQ(y.data()[i], 0.5f * x.data()[i]);
}

TEST(SeGate, ScaleConstantAcrossPositions) {
  Rng rng(8);
  const Tensor x = random_tensor(rng, {1, 20, 5, 5}, 0.5, 1.5);
  const Tensor w1 = random_tensor(rng, {2, 20}), b1 = random_tensor(rng, {2});
  const Tensor w2 = random_tensor(rng, {20, 2}), b2 = random_tensor(rng, {20});
  const Tensor y = se_gate(x, {&w1, &b1, &w2, &b2}, 16);  // hidden = ceil(20 / 16) = 2
  for (int c = 0; c < 20; ++c) {
    const double s0 = y.at(0, c, 0, 0) / x.at(0, c, 0, 0);
    const double s1 = y.at(0, c, 3, 4) / x.at(0, c, 3, 4);
    EXPECT_NEAR(s0, s1, 1e-6);
    EXPECT_GT(s0, 0.0);
    EXPECT_LT(s0, 1.0);
  }
}

TEST(SeGate, MissingParamsNamed) {
  const Tensor x({1, 4, 2, 2});
  try {
    se_gate(x, {}, 4);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kMissing);
  }
}

TEST(Pooling, MaxAndAverage) {
  const Tensor x({1, 1, 2, 4}, std::vector<float>{1, 5, 2, 0, 3, 4, 8, 1});
  const Tensor m = max_pool2x2(x);
  EXPECT_EQ(m.shape(), (Tensor::Shape{1, 1, 1, 2}));
  EXPECT_EQ(m.data()[0], 5.0f);
  EXPECT_EQ(m.data()[1], 8.0f);
  EXPECT_FLOAT_EQ(global_avg_pool(x).data()[0], 3.0f);
  EXPECT_FLOAT_EQ(adaptive_avg_pool(x, 1).data()[0], 3.0f);
}

TEST(ShapeOps, PadCropConcatSlice) {
  Rng rng(6);
  const Tensor x = random_tensor(rng, {1, 3, 4, 5});
  const Tensor p = pad_zero(x, 1, 2, 3, 0);
  EXPECT_EQ(p.shape(), (Tensor::Shape{1, 3, 7, 8}));
  EXPECT_EQ(p.at(0, 1, 0, 0), 0.0f);
  EXPECT_TRUE(bitwise_equal(crop(p, 1, 3, 4, 5), x));
  const Tensor y = random_tensor(rng, {1, 2, 4, 5});
  const Tensor c = concat_channels({&x, &y});
  EXPECT_EQ(c.c(), 5);
  EXPECT_TRUE(bitwise_equal(slice_channels(c, 0, 3), x));
  EXPECT_TRUE(bitwise_equal(slice_channels(c, 3, 2), y));
  EXPECT_TRUE(bitwise_equal(flip_h(flip_h(x)), x));
  EXPECT_EQ(flip_h(x).at(0, 2, 1, 0), x.at(0, 2, 1, 4));
  EXPECT_EQ(flip_v(x).at(0, 2, 0, 1), x.at(0, 2, 3, 1));
}

TEST(Activations, FiniteOnFuzz) {
  Rng rng(12);
  Tensor x = random_tensor(rng, {1, 4, 8, 8}, -50, 50);
  Tensor a = x, b = x, c = x;
  relu_(a);
  gelu_(b);
  sigmoid_(c);
  EXPECT_TRUE(a.all_finite() && b.all_finite() && c.all_finite());
  for (float v : c.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  Tensor one({1}, 1.0f);
  gelu_(one);
  EXPECT_NEAR(one.data()[0], 0.8413447, 1e-6);
}
