#include "op_cases.hpp"
#include "support.hpp"

#include "xrot/autodiff/ops.hpp"
#include "xrot/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using namespace xrot;
using ad::Shape;
using ad::Tensor;
using TD = Tensor<double>;

namespace {

constexpr double kOpTolerance = 1e-6;
constexpr int kTrials = 20;

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Tensor, ConstructionChecksSize) {
  EXPECT_EQ(code_of([] { TD::from_data({2, 3}, ad::Buffer<double>(5)); }), ErrorCode::ShapeMismatch);
  const auto t = TD::full({2, 2}, 3.0);
  EXPECT_EQ(t.numel(), 4u);
  EXPECT_EQ(ad::shape_str(t.shape()), "[2, 2]");
}

TEST(Tensor, ItemAndBackwardNeedScalars) {
  const auto t = TD::zeros({2}, true);
  EXPECT_EQ(code_of([&] { (void)t.item(); }), ErrorCode::NotScalar);
  auto y = ad::scale(t, 2.0);
  EXPECT_EQ(code_of([&] { y.backward(); }), ErrorCode::NotScalar);
}

TEST(Tensor, BackwardAccumulatesAcrossCalls) {
  std::mt19937_64 rng(1);
  auto w = test::random_tensor({3, 4}, rng);
  auto x = test::random_tensor({2, 4}, rng, -1, 1, false);
  auto loss = ad::sum(ad::linear(x, w, TD()));
  loss.backward();
  const std::vector<double> once(w.grad().begin(), w.grad().end());
  // d/dW sum(x W^T) = column sums of x, repeated for every output row.
  for (std::size_t o = 0; o < 3; ++o) {
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_NEAR(once[o * 4 + i], x.data()[i] + x.data()[4 + i], 1e-15);
    }
  }
  loss.backward();
  for (std::size_t i = 0; i < once.size(); ++i) EXPECT_EQ(w.grad()[i], 2 * once[i]);
}

TEST(Tensor, DetectsCycles) {
  auto x = TD::full({1}, 1.0, true);
  auto b = ad::scale(x, 2.0);
  auto c = ad::relu(b);
  // Splice b in as a parent of x to close the loop x -> b -> x.
  x.node()->parents.push_back(c.node()->parents[0]);
  EXPECT_EQ(code_of([&] { c.backward(); }), ErrorCode::GraphCycle);
  x.node()->parents.clear();
}

TEST(Tensor, NoGradSkipsRecording) {
  auto x = TD::full({2}, 1.0, true);
  ad::NoGradGuard guard;
  EXPECT_FALSE(ad::grad_enabled());
  EXPECT_FALSE(ad::scale(x, 2.0).requires_grad());
}

TEST(Ops, ShapeMismatchNamesBothShapes) {
  const auto a = TD::zeros({2, 3}), b = TD::zeros({3, 2});
  try {
    ad::mul(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ShapeMismatch);
    EXPECT_NE(std::string(e.what()).find("[2, 3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[3, 2]"), std::string::npos);
  }
  EXPECT_EQ(code_of([&] { ad::matmul(a, a); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([&] { ad::add(a, TD::zeros({2})); }), ErrorCode::ShapeMismatch);
}

TEST(Ops, ConvWithUnitKernelIsLinear) {
  std::mt19937_64 rng(2);
  const auto x = test::random_tensor({3, 5, 1, 1}, rng);
  const auto w = test::random_tensor({4, 5, 1, 1}, rng);
  const auto b = test::random_tensor({4}, rng);
  const auto conv = ad::conv2d(x, w, b, {});
  const auto lin = ad::linear(ad::reshape(x, {3, 5}), ad::reshape(w, {4, 5}), b);
  for (std::size_t i = 0; i < lin.numel(); ++i) EXPECT_NEAR(conv.data()[i], lin.data()[i], 1e-14);
}

TEST(Ops, ConvMatchesDirectSum) {
  std::mt19937_64 rng(3);
  const auto x = test::random_tensor({2, 3, 7, 6}, rng);
  const auto w = test::random_tensor({4, 3, 3, 3}, rng);
  const auto b = test::random_tensor({4}, rng);
  const auto y = ad::conv2d(x, w, b, {2, 1});
  ASSERT_EQ(y.shape(), (Shape{2, 4, 4, 3}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 4; ++o)
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
          double acc = b.data()[o];
          for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t ki = 0; ki < 3; ++ki)
              for (std::size_t kj = 0; kj < 3; ++kj) {
                const long r = long(i * 2 + ki) - 1, s = long(j * 2 + kj) - 1;
                if (r < 0 || s < 0 || r >= 7 || s >= 6) continue;
                acc += x.data()[((n * 3 + c) * 7 + r) * 6 + s] * w.data()[((o * 3 + c) * 3 + ki) * 3 + kj];
              }
          EXPECT_NEAR(y.data()[((n * 4 + o) * 4 + i) * 3 + j], acc, 1e-13);
        }
}

TEST(Ops, MaskedSoftmaxKnownValues) {
  const double inf = std::numeric_limits<double>::infinity();
  const auto x = TD::from_data({1, 3}, {0.3, 5.0, -0.2});
  const auto mask = TD::from_data({3}, {0.0, -inf, 0.0});
  const auto y = ad::masked_softmax(x, mask);
  const double s = 1.0 / (1.0 + std::exp(-0.5));
  EXPECT_NEAR(y.data()[0], s, 1e-15);
  EXPECT_EQ(y.data()[1], 0.0);
  EXPECT_NEAR(y.data()[2], 1.0 - s, 1e-15);

  const auto all = ad::masked_softmax(x, TD::full({3}, -inf));
  EXPECT_TRUE(std::isnan(all.data()[0]));
}

TEST(Ops, DropoutModes) {
  std::mt19937_64 rng(4);
  const auto x = TD::full({10000}, 1.0);
  const auto eval = ad::dropout(x, 0.3, false, rng);
  EXPECT_TRUE(eval.same_storage(x));
  const auto y = ad::dropout(x, 0.5, true, rng);
  std::size_t kept = 0;
  for (double v : y.data()) {
    ASSERT_TRUE(v == 0.0 || v == 2.0);
    kept += v != 0.0;
  }
  EXPECT_NEAR(double(kept) / 10000.0, 0.5, 0.03);
  EXPECT_THROW(ad::dropout(x, 1.0, true, rng), Error);
}

TEST(Ops, BatchNormRunningStatistics) {
  auto x = TD::from_data({4, 1}, {1, 2, 3, 6});
  auto gamma = TD::full({1}, 1.0), beta = TD::zeros({1});
  auto rm = TD::zeros({1}), rv = TD::full({1}, 1.0);
  const auto y = ad::batch_norm(x, gamma, beta, rm, rv, true);
  // mean 3, biased var 3.5, unbiased var 14/3
  EXPECT_NEAR(rm.data()[0], 0.3, 1e-15);
  EXPECT_NEAR(rv.data()[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-15);
  EXPECT_NEAR(y.data()[0], -2.0 / std::sqrt(3.5 + 1e-5), 1e-12);
  const auto e = ad::batch_norm(x, gamma, beta, rm, rv, false);
  EXPECT_NEAR(e.data()[0], (1 - 0.3) / std::sqrt(rv.data()[0] + 1e-5), 1e-12);
}

class Gradients : public ::testing::TestWithParam<test::OpCase> {};

TEST_P(Gradients, MatchFiniteDifferences) {
  std::size_t results = 0;
  GetParam().run(kTrials, [&](const std::string& what, const test::GradCheck& r) {
    EXPECT_LT(r.max_rel_error, kOpTolerance)
        << what << ": analytic " << r.worst_analytic << " numeric " << r.worst_numeric;
    EXPECT_GT(r.checked, 0u) << what;
    ++results;
  });
  EXPECT_GT(results, 0u);
}

INSTANTIATE_TEST_SUITE_P(EveryOp, Gradients, ::testing::ValuesIn(test::op_gradient_cases()),
                         [](const auto& info) { return info.param.name; });
