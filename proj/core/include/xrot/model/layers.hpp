#pragma once

#include "xrot/autodiff/ops.hpp"
#include "xrot/autodiff/tensor.hpp"

#include <random>
#include <string>
#include <vector>

namespace xrot {

/// A parameter or buffer registered under a stable dotted name.
template <typename T>
struct NamedTensor {
  std::string name;
  ad::Tensor<T>* tensor = nullptr;
  bool trainable = true;
};

// Weights start uniform in +-1/sqrt(fan_in); norm scales at 1, shifts at 0.

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding, bool bias,
         std::mt19937_64& rng);

  ad::Tensor<T> operator()(const ad::Tensor<T>& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out);

  ad::Tensor<T> weight;
  ad::Tensor<T> bias;
  ad::Conv2dParams params;
};

template <typename T>
class BatchNorm {
 public:
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels);

  /// Train mode updates the running statistics.
  ad::Tensor<T> operator()(const ad::Tensor<T>& x, bool train);
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out);

  ad::Tensor<T> gamma;
  ad::Tensor<T> beta;
  ad::Tensor<T> running_mean;
  ad::Tensor<T> running_var;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::mt19937_64& rng);

  ad::Tensor<T> operator()(const ad::Tensor<T>& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out);

  ad::Tensor<T> weight;  // [out, in]
  ad::Tensor<T> bias;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t width);

  ad::Tensor<T> operator()(const ad::Tensor<T>& x) const;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out);

  ad::Tensor<T> gamma;
  ad::Tensor<T> beta;
};

/// conv3x3(stride) - BN - ReLU - conv3x3 - BN, plus identity or a 1x1
/// projection shortcut, then ReLU.
template <typename T>
class BasicBlock {
 public:
  BasicBlock() = default;
  BasicBlock(std::size_t in, std::size_t out, std::size_t stride, std::mt19937_64& rng);

  ad::Tensor<T> operator()(const ad::Tensor<T>& x, bool train);
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out);

 private:
  Conv2d<T> conv1_, conv2_, proj_;
  BatchNorm<T> bn1_, bn2_, proj_bn_;
  bool has_proj_ = false;
};

/// Pre-activation bottleneck: (BN - ReLU - conv) x3 with kernels 1, 3 (stride
/// 2), 1, a 1x1 stride-2 projection on the skip path, then 2x2 mean pooling.
template <typename T>
class BottleneckBlock {
 public:
  BottleneckBlock() = default;
  BottleneckBlock(std::size_t in, std::size_t mid, std::size_t out, std::mt19937_64& rng);

  ad::Tensor<T> operator()(const ad::Tensor<T>& x, bool train);
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out);

 private:
  BatchNorm<T> bn1_, bn2_, bn3_;
  Conv2d<T> conv1_, conv2_, conv3_, proj_;
};

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class BatchNorm<float>;
extern template class BatchNorm<double>;
extern template class Linear<float>;
extern template class Linear<double>;
extern template class LayerNorm<float>;
extern template class LayerNorm<double>;
extern template class BasicBlock<float>;
extern template class BasicBlock<double>;
extern template class BottleneckBlock<float>;
extern template class BottleneckBlock<double>;

}  // namespace xrot
