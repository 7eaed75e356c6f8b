#include "support.hpp"

#include "xrot/error.hpp"
#include "xrot/model/loss.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace xrot;
using TD = ad::Tensor<double>;

namespace {

TD row(const std::array<double, 4>& q, double scale = 1.0, bool grad = false) {
  return TD::from_data({1, 4}, {q[0] * scale, q[1] * scale, q[2] * scale, q[3] * scale}, grad);
}

}  // namespace

TEST(QuatLoss, ZeroOnEquivalentOutputs) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto q = test::random_quat(rng);
    const std::vector<UnitQuaternion> target{q};
    EXPECT_LT(loss_quat(row(q.coeffs()), target).item(), 1e-12);
    EXPECT_LT(loss_quat(row(q.coeffs(), -1.0), target).item(), 1e-12);
    EXPECT_LT(loss_quat(row(q.coeffs(), 2.0), target).item(), 1e-12);
  }
}

TEST(QuatLoss, PositiveOnDifferentRotations) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto a = test::random_quat(rng), b = test::random_quat(rng);
    const std::vector<UnitQuaternion> target{b};
    const double loss = loss_quat(row(a.coeffs(), 3.0), target).item();
    // min over signs of the chord length between the two unit quaternions
    const double d = std::abs(a.dot(b));
    EXPECT_NEAR(loss, std::sqrt(2.0 - 2.0 * d), 1e-12);
    if (quat_angle_deg(a, b) > 1e-3) EXPECT_GT(loss, 0.0);
  }
}

TEST(QuatLoss, BatchMean) {
  const std::vector<UnitQuaternion> targets{UnitQuaternion::identity(), UnitQuaternion(0, 1, 0, 0)};
  const auto out = TD::from_data({2, 4}, {1, 0, 0, 0, 1, 0, 0, 0});
  EXPECT_NEAR(loss_quat(out, targets).item(), std::sqrt(2.0) / 2.0, 1e-15);
}

TEST(QuatLoss, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 20; ++t) {
    auto out = test::random_tensor({3, 4}, rng, -2, 2);
    const std::vector<UnitQuaternion> targets{test::random_quat(rng), test::random_quat(rng), test::random_quat(rng)};
    const auto r = test::check_gradients([&] { return loss_quat(out, targets); }, {out});
    EXPECT_LT(r.max_rel_error, 1e-6);
  }
}

TEST(QuatLoss, Errors) {
  const std::vector<UnitQuaternion> one{UnitQuaternion::identity()};
  try {
    loss_quat(TD::zeros({1, 4}), one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateQuaternion);
  }
  EXPECT_THROW(loss_quat(TD::zeros({2, 4}), one), Error);
  EXPECT_THROW(loss_quat(TD::zeros({1, 3}), one), Error);
}

TEST(EulerLoss, RegressionWrapsYaw) {
  const double deg = M_PI / 180;
  const std::vector<YawPitch> exact{{30, -10}};
  EXPECT_NEAR(loss_euler(TD::from_data({1, 2}, {30 * deg, -10 * deg}), exact, RotationMode::EulerRegression).item(),
              0.0, 1e-15);
  const std::vector<YawPitch> wrap{{-179, 0}};
  const double loss = loss_euler(TD::from_data({1, 2}, {179 * deg, 0}), wrap, RotationMode::EulerRegression).item();
  EXPECT_NEAR(loss, (2 * deg) * (2 * deg), 1e-12);
}

TEST(EulerLoss, ClassificationOnConfidentTrueBins) {
  const std::vector<YawPitch> target{{-179.5, 12.25}};
  ad::Buffer<double> logits(720, 0.0);
  logits[angle_bin(-179.5)] = 1000.0;
  logits[360 + angle_bin(12.25)] = 1000.0;
  const auto out = TD::from_data({1, 720}, logits);
  EXPECT_LT(loss_euler(out, target, RotationMode::EulerClassification).item(), 1e-12);
  logits.assign(720, 0.0);
  EXPECT_NEAR(loss_euler(TD::from_data({1, 720}, logits), target, RotationMode::EulerClassification).item(),
              2.0 * std::log(360.0), 1e-12);
}

TEST(EulerLoss, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(4);
  const std::vector<YawPitch> targets{{-120, 20}, {170, -5}};
  auto reg = test::random_tensor({2, 2}, rng, -1, 1);
  auto cls = test::random_tensor({2, 720}, rng, -2, 2);
  EXPECT_LT(test::check_gradients([&] { return loss_euler(reg, targets, RotationMode::EulerRegression); }, {reg})
                .max_rel_error,
            1e-6);
  EXPECT_LT(
      test::check_gradients([&] { return loss_euler(cls, targets, RotationMode::EulerClassification); }, {cls}, 1e-6,
                            100)
          .max_rel_error,
      1e-6);
}

TEST(Bins, EdgesAndCenters) {
  EXPECT_EQ(angle_bin(-180.0), 0u);
  EXPECT_EQ(angle_bin(-179.01), 0u);
  EXPECT_EQ(angle_bin(0.0), 180u);
  EXPECT_EQ(angle_bin(179.99), 359u);
  EXPECT_EQ(angle_bin(180.0), 0u);
  EXPECT_DOUBLE_EQ(bin_center_deg(0), -179.5);
  EXPECT_DOUBLE_EQ(bin_center_deg(359), 179.5);
}

TEST(Decode, AllModes) {
  const std::vector<double> q{-2, 0, 0.5, 0};
  const auto dq = decode_output<double>(q, RotationMode::Quaternion);
  EXPECT_GE(dq.w(), 0.0);
  EXPECT_LE(test::quat_distance(dq, UnitQuaternion(-2, 0, 0.5, 0)), 1e-15);

  const std::vector<double> e{40 * M_PI / 180, -15 * M_PI / 180};
  const auto de = decode_output<double>(e, RotationMode::EulerRegression);
  EXPECT_LE(test::quat_distance(de, yaw_pitch_to_quat({40, -15})), 1e-12);

  std::vector<double> logits(720, 0.0);
  logits[angle_bin(40.2)] = 5;
  logits[360 + angle_bin(-15.7)] = 5;
  const auto dc = decode_output<double>(logits, RotationMode::EulerClassification);
  EXPECT_LE(test::quat_distance(dc, yaw_pitch_to_quat({40.5, -15.5})), 1e-12);
}

TEST(EulerTarget, MatchesHeadingOfRelativeRotation) {
  const auto rel = yaw_pitch_to_quat({25, 10});
  const auto t = euler_target(rel);
  EXPECT_NEAR(t.yaw_deg, 25, 1e-9);
  EXPECT_NEAR(t.pitch_deg, 10, 1e-9);
}

TEST(RotationLoss, DispatchesOnMode) {
  const std::vector<UnitQuaternion> targets{yaw_pitch_to_quat({10, 0})};
  const auto q = targets[0].coeffs();
  EXPECT_LT(rotation_loss(row(q), targets, RotationMode::Quaternion).item(), 1e-12);
  const auto e = TD::from_data({1, 2}, {10 * M_PI / 180, 0});
  EXPECT_LT(rotation_loss(e, targets, RotationMode::EulerRegression).item(), 1e-20);
}
