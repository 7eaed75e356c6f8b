#include "xrot/model/loss.hpp"

#include "xrot/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace xrot {

using ad::Shape;
using ad::Tensor;

namespace {

void check_rows(const Shape& s, std::size_t batch, std::size_t width, const char* op) {
  if (s.size() != 2 || s[0] != batch || s[1] != width) ad::shape_error(op, s, Shape{batch, width});
}

// log-softmax cross-entropy of one logit block; writes d loss / d logits.
template <typename T>
double cross_entropy(const T* logits, std::size_t n, std::size_t target, T* dlogits) {
  double mx = logits[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, static_cast<double>(logits[i]));
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += std::exp(logits[i] - mx);
  const double lse = mx + std::log(total);
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::exp(logits[i] - lse);
    dlogits[i] = static_cast<T>(p - (i == target ? 1.0 : 0.0));
  }
  return lse - logits[target];
}

}  // namespace

template <typename T>
Tensor<T> loss_quat(const Tensor<T>& q_raw, std::span<const UnitQuaternion> targets) {
  const std::size_t batch = targets.size();
  check_rows(q_raw.shape(), batch, 4, "loss_quat");
  if (batch == 0) raise(ErrorCode::ShapeMismatch, "loss_quat on an empty batch");
  auto q = q_raw.data();
  ad::Buffer<T> dq(batch * 4);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const T* row = q.data() + 4 * b;
    double norm = 0.0;
    for (int i = 0; i < 4; ++i) norm += static_cast<double>(row[i]) * row[i];
    norm = std::sqrt(norm);
    if (!std::isfinite(norm)) raise(ErrorCode::NonFiniteInput, "loss_quat: non-finite prediction");
    if (norm <= 1e-8) {
      raise(ErrorCode::DegenerateQuaternion, "loss_quat: predicted quaternion norm " + std::to_string(norm) +
                                                 " <= 1e-8 at batch row " + std::to_string(b));
    }
    const auto gt = targets[b].coeffs();
    double n[4], d_pos[4], d_neg[4];
    double l_pos = 0.0, l_neg = 0.0;
    for (int i = 0; i < 4; ++i) {
      n[i] = row[i] / norm;
      d_pos[i] = gt[i] - n[i];
      d_neg[i] = gt[i] + n[i];
      l_pos += d_pos[i] * d_pos[i];
      l_neg += d_neg[i] * d_neg[i];
    }
    const double sign = l_pos <= l_neg ? 1.0 : -1.0;
    const double* d = sign > 0 ? d_pos : d_neg;
    const double loss = std::sqrt(sign > 0 ? l_pos : l_neg);
    total += loss;
    // dL/dn = -s d / L, then through n = q / |q|: (I - n n^T) / |q|.
    double dn[4] = {0, 0, 0, 0};
    if (loss > 0.0) {
      for (int i = 0; i < 4; ++i) dn[i] = -sign * d[i] / loss;
    }
    double proj = 0.0;
    for (int i = 0; i < 4; ++i) proj += n[i] * dn[i];
    for (int i = 0; i < 4; ++i) dq[4 * b + i] = static_cast<T>((dn[i] - n[i] * proj) / norm / batch);
  }
  return Tensor<T>::make_result(Shape{1}, {static_cast<T>(total / batch)}, {q_raw},
                                [q_raw, dq = std::move(dq)](std::span<const T> g) {
    auto gq = q_raw.grad_buffer();
    for (std::size_t i = 0; i < dq.size(); ++i) gq[i] += g[0] * dq[i];
  });
}

template <typename T>
Tensor<T> loss_euler(const Tensor<T>& outputs, std::span<const YawPitch> targets, RotationMode mode) {
  const std::size_t batch = targets.size();
  if (batch == 0) raise(ErrorCode::ShapeMismatch, "loss_euler on an empty batch");
  auto out = outputs.data();
  double total = 0.0;
  ad::Buffer<T> dout;
  if (mode == RotationMode::EulerRegression) {
    check_rows(outputs.shape(), batch, 2, "loss_euler");
    dout.resize(batch * 2);
    for (std::size_t b = 0; b < batch; ++b) {
      const double two_pi = 2.0 * std::numbers::pi;
      double dy = out[2 * b] - deg_to_rad(targets[b].yaw_deg);
      dy -= two_pi * std::round(dy / two_pi);
      const double dp = out[2 * b + 1] - deg_to_rad(targets[b].pitch_deg);
      total += dy * dy + dp * dp;
      dout[2 * b] = static_cast<T>(2.0 * dy / batch);
      dout[2 * b + 1] = static_cast<T>(2.0 * dp / batch);
    }
  } else if (mode == RotationMode::EulerClassification) {
    check_rows(outputs.shape(), batch, 720, "loss_euler");
    dout.resize(batch * 720);
    for (std::size_t b = 0; b < batch; ++b) {
      const T* row = out.data() + 720 * b;
      T* drow = dout.data() + 720 * b;
      total += cross_entropy(row, 360, angle_bin(targets[b].yaw_deg), drow);
      total += cross_entropy(row + 360, 360, angle_bin(targets[b].pitch_deg), drow + 360);
      for (std::size_t i = 0; i < 720; ++i) drow[i] /= static_cast<T>(batch);
    }
  } else {
    raise(ErrorCode::InvalidArgument, "loss_euler needs an Euler rotation mode");
  }
  return Tensor<T>::make_result(Shape{1}, {static_cast<T>(total / batch)}, {outputs},
                                [outputs, dout = std::move(dout)](std::span<const T> g) {
    auto go = outputs.grad_buffer();
    for (std::size_t i = 0; i < dout.size(); ++i) go[i] += g[0] * dout[i];
  });
}

template <typename T>
Tensor<T> rotation_loss(const Tensor<T>& outputs, std::span<const UnitQuaternion> targets, RotationMode mode) {
  if (mode == RotationMode::Quaternion) return loss_quat(outputs, targets);
  std::vector<YawPitch> headings;
  headings.reserve(targets.size());
  for (const auto& q : targets) headings.push_back(euler_target(q));
  return loss_euler(outputs, std::span<const YawPitch>(headings), mode);
}

YawPitch euler_target(const UnitQuaternion& rel) { return matrix_to_yaw_pitch(quat_to_matrix(rel)); }

std::size_t angle_bin(double deg) {
  double shifted = std::fmod(deg + 180.0, 360.0);
  if (shifted < 0.0) shifted += 360.0;
  return std::min<std::size_t>(static_cast<std::size_t>(std::floor(shifted)), 359);
}

double bin_center_deg(std::size_t bin) { return -180.0 + static_cast<double>(bin) + 0.5; }

template <typename T>
UnitQuaternion decode_output(std::span<const T> row, RotationMode mode) {
  switch (mode) {
    case RotationMode::Quaternion:
      if (row.size() != 4) ad::shape_error("decode_output", Shape{row.size()}, Shape{4});
      return UnitQuaternion(row[0], row[1], row[2], row[3]).canonical();
    case RotationMode::EulerRegression:
      if (row.size() != 2) ad::shape_error("decode_output", Shape{row.size()}, Shape{2});
      return yaw_pitch_to_quat({rad_to_deg(row[0]), rad_to_deg(row[1])});
    case RotationMode::EulerClassification: {
      if (row.size() != 720) ad::shape_error("decode_output", Shape{row.size()}, Shape{720});
      const auto yaw = std::max_element(row.begin(), row.begin() + 360) - row.begin();
      const auto pitch = std::max_element(row.begin() + 360, row.end()) - (row.begin() + 360);
      return yaw_pitch_to_quat({bin_center_deg(static_cast<std::size_t>(yaw)),
                                bin_center_deg(static_cast<std::size_t>(pitch))});
    }
  }
  raise(ErrorCode::InvalidArgument, "unknown rotation mode");
}

template Tensor<float> loss_quat(const Tensor<float>&, std::span<const UnitQuaternion>);
template Tensor<double> loss_quat(const Tensor<double>&, std::span<const UnitQuaternion>);
template Tensor<float> loss_euler(const Tensor<float>&, std::span<const YawPitch>, RotationMode);
template Tensor<double> loss_euler(const Tensor<double>&, std::span<const YawPitch>, RotationMode);
template Tensor<float> rotation_loss(const Tensor<float>&, std::span<const UnitQuaternion>, RotationMode);
template Tensor<double> rotation_loss(const Tensor<double>&, std::span<const UnitQuaternion>, RotationMode);
template UnitQuaternion decode_output(std::span<const float>, RotationMode);
template UnitQuaternion decode_output(std::span<const double>, RotationMode);

}  // namespace xrot
