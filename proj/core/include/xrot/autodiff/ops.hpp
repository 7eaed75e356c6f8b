#pragma once

#include "xrot/autodiff/tensor.hpp"

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace xrot::ad {

// Differentiable primitives. Shapes must conform exactly; the only implicit
// broadcast is bias-style: where noted, the second operand may match the
// trailing dimensions of the first and is then repeated over the leading ones.
// Every op throws ShapeMismatch naming both shapes on violation.

/// a + b, where b has a's shape or a's trailing dims.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
/// Elementwise product of equally shaped tensors.
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> relu(const Tensor<T>& x);

/// Debugging aid for finite-difference checks: while enabled on the calling
/// thread, every relu folds the sign pattern of its input into a hash, so two
/// evaluations with equal hashes took the same linear piece.
void set_activation_trace(bool on);
/// Returns the hash accumulated since the last call and clears it.
std::uint64_t take_activation_trace();
/// Sum of all elements, shape [1].
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

/// Batched matrix product over the last two axes; leading axes must match.
/// The transpose flags apply to the last two axes of the respective operand.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a = false, bool transpose_b = false);

/// x[..., in] * weight[out, in]^T + bias[out]; bias may be undefined.
template <typename T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

struct Conv2dParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// x[N, C, H, W] with weight[O, C, k, k] and optional bias[O], zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dParams params);

/// Non-overlapping k x k mean pooling of x[N, C, H, W]; H and W must be divisible by k.
template <typename T> Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t k);

/// Per-channel normalization of x[N, C, ...] over every axis but 1.
/// Train mode normalizes with the batch statistics (biased variance) and
/// blends them into the running buffers: r <- (1 - momentum) r + momentum s,
/// using the unbiased variance. Eval mode uses the running buffers only.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, bool train, T momentum = T(0.1), T eps = T(1e-5));

/// Normalization over the last axis with affine gamma/beta of that length.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));

/// softmax(x + mask) along `axis` (negative counts from the end). The additive
/// mask may be undefined or match x's trailing dims; -inf entries receive
/// exactly zero weight. A row that is masked everywhere yields NaN.
template <typename T> Tensor<T> masked_softmax(const Tensor<T>& x, const Tensor<T>& mask, int axis = -1);

/// Inverted dropout: in train mode zeroes entries with probability p and
/// scales the survivors by 1 / (1 - p). Identity in eval mode or when p == 0.
template <typename T> Tensor<T> dropout(const Tensor<T>& x, T p, bool train, std::mt19937_64& rng);

template <typename T> Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
/// Generalized transpose: output axis i is input axis perm[i].
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm);
template <typename T> Tensor<T> transpose(const Tensor<T>& x, std::size_t axis0, std::size_t axis1);
/// x restricted to [start, start + length) along `axis`.
template <typename T> Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);

}  // namespace xrot::ad
