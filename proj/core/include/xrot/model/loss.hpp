#pragma once

#include "xrot/autodiff/tensor.hpp"
#include "xrot/geometry.hpp"
#include "xrot/model/config.hpp"

#include <span>

namespace xrot {

/// Mean over the batch of min_s ||q_gt - s * q / ||q|| ||, s in {+1, -1}.
/// q_raw is [B, 4] in (w, x, y, z) order. Throws DegenerateQuaternion when a
/// row has norm <= 1e-8 and ShapeMismatch on a size mismatch.
template <typename T>
ad::Tensor<T> loss_quat(const ad::Tensor<T>& q_raw, std::span<const UnitQuaternion> targets);

/// Regression (outputs [B, 2], radians): mean of wrapped-yaw^2 + pitch^2.
/// Classification (outputs [B, 720] logits, 1-degree bins over
/// [-180, 180) for yaw then pitch): sum of the two cross-entropies, averaged
/// over the batch.
template <typename T>
ad::Tensor<T> loss_euler(const ad::Tensor<T>& outputs, std::span<const YawPitch> targets, RotationMode mode);

/// Loss for the configured encoding against relative-rotation targets.
template <typename T>
ad::Tensor<T> rotation_loss(const ad::Tensor<T>& outputs, std::span<const UnitQuaternion> targets,
                            RotationMode mode);

/// Heading part of a relative rotation, used as the Euler-mode target.
YawPitch euler_target(const UnitQuaternion& rel);

/// Bin of an angle in the 360 one-degree bins over [-180, 180).
std::size_t angle_bin(double deg);
double bin_center_deg(std::size_t bin);

/// Rotation encoded by one output row, as a canonical unit quaternion.
template <typename T>
UnitQuaternion decode_output(std::span<const T> row, RotationMode mode);

}  // namespace xrot
