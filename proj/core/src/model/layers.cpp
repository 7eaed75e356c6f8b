#include "xrot/model/layers.hpp"

#include <cmath>

namespace xrot {

using ad::Shape;
using ad::Tensor;

namespace {

template <typename T>
Tensor<T> uniform_param(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  ad::Buffer<T> data(ad::numel(shape));
  for (T& v : data) v = static_cast<T>(dist(rng));
  return Tensor<T>::from_data(std::move(shape), std::move(data), true);
}

}  // namespace

template <typename T>
Conv2d<T>::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, std::size_t padding,
                  bool bias, std::mt19937_64& rng)
    : params{stride, padding} {
  const std::size_t fan_in = in * kernel * kernel;
  weight = uniform_param<T>({out, in, kernel, kernel}, fan_in, rng);
  if (bias) this->bias = uniform_param<T>({out}, fan_in, rng);
}

template <typename T>
Tensor<T> Conv2d<T>::operator()(const Tensor<T>& x) const {
  return ad::conv2d(x, weight, bias, params);
}

template <typename T>
void Conv2d<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  out.push_back({prefix + ".weight", &weight, true});
  if (bias.defined()) out.push_back({prefix + ".bias", &bias, true});
}

template <typename T>
BatchNorm<T>::BatchNorm(std::size_t channels)
    : gamma(Tensor<T>::full({channels}, T(1), true)),
      beta(Tensor<T>::zeros({channels}, true)),
      running_mean(Tensor<T>::zeros({channels})),
      running_var(Tensor<T>::full({channels}, T(1))) {}

template <typename T>
Tensor<T> BatchNorm<T>::operator()(const Tensor<T>& x, bool train) {
  return ad::batch_norm(x, gamma, beta, running_mean, running_var, train);
}

template <typename T>
void BatchNorm<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  out.push_back({prefix + ".gamma", &gamma, true});
  out.push_back({prefix + ".beta", &beta, true});
  out.push_back({prefix + ".running_mean", &running_mean, false});
  out.push_back({prefix + ".running_var", &running_var, false});
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, std::mt19937_64& rng)
    : weight(uniform_param<T>({out, in}, in, rng)), bias(uniform_param<T>({out}, in, rng)) {}

template <typename T>
Tensor<T> Linear<T>::operator()(const Tensor<T>& x) const {
  return ad::linear(x, weight, bias);
}

template <typename T>
void Linear<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  out.push_back({prefix + ".weight", &weight, true});
  out.push_back({prefix + ".bias", &bias, true});
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t width)
    : gamma(Tensor<T>::full({width}, T(1), true)), beta(Tensor<T>::zeros({width}, true)) {}

template <typename T>
Tensor<T> LayerNorm<T>::operator()(const Tensor<T>& x) const {
  return ad::layer_norm(x, gamma, beta);
}

template <typename T>
void LayerNorm<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  out.push_back({prefix + ".gamma", &gamma, true});
  out.push_back({prefix + ".beta", &beta, true});
}

template <typename T>
BasicBlock<T>::BasicBlock(std::size_t in, std::size_t out, std::size_t stride, std::mt19937_64& rng)
    : conv1_(in, out, 3, stride, 1, false, rng),
      conv2_(out, out, 3, 1, 1, false, rng),
      bn1_(out),
      bn2_(out),
      has_proj_(stride != 1 || in != out) {
  if (has_proj_) {
    proj_ = Conv2d<T>(in, out, 1, stride, 0, false, rng);
    proj_bn_ = BatchNorm<T>(out);
  }
}

template <typename T>
Tensor<T> BasicBlock<T>::operator()(const Tensor<T>& x, bool train) {
  Tensor<T> h = ad::relu(bn1_(conv1_(x), train));
  h = bn2_(conv2_(h), train);
  const Tensor<T> skip = has_proj_ ? proj_bn_(proj_(x), train) : x;
  return ad::relu(ad::add(h, skip));
}

template <typename T>
void BasicBlock<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  conv1_.collect(prefix + ".conv1", out);
  bn1_.collect(prefix + ".bn1", out);
  conv2_.collect(prefix + ".conv2", out);
  bn2_.collect(prefix + ".bn2", out);
  if (has_proj_) {
    proj_.collect(prefix + ".proj", out);
    proj_bn_.collect(prefix + ".proj_bn", out);
  }
}

template <typename T>
BottleneckBlock<T>::BottleneckBlock(std::size_t in, std::size_t mid, std::size_t out, std::mt19937_64& rng)
    : bn1_(in),
      bn2_(mid),
      bn3_(mid),
      conv1_(in, mid, 1, 1, 0, true, rng),
      conv2_(mid, mid, 3, 2, 1, true, rng),
      conv3_(mid, out, 1, 1, 0, true, rng),
      proj_(in, out, 1, 2, 0, true, rng) {}

template <typename T>
Tensor<T> BottleneckBlock<T>::operator()(const Tensor<T>& x, bool train) {
  Tensor<T> h = conv1_(ad::relu(bn1_(x, train)));
  h = conv2_(ad::relu(bn2_(h, train)));
  h = conv3_(ad::relu(bn3_(h, train)));
  return ad::avg_pool2d(ad::add(h, proj_(x)), 2);
}

template <typename T>
void BottleneckBlock<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  bn1_.collect(prefix + ".bn1", out);
  conv1_.collect(prefix + ".conv1", out);
  bn2_.collect(prefix + ".bn2", out);
  conv2_.collect(prefix + ".conv2", out);
  bn3_.collect(prefix + ".bn3", out);
  conv3_.collect(prefix + ".conv3", out);
  proj_.collect(prefix + ".proj", out);
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm<float>;
template class BatchNorm<double>;
template class Linear<float>;
template class Linear<double>;
template class LayerNorm<float>;
template class LayerNorm<double>;
template class BasicBlock<float>;
template class BasicBlock<double>;
template class BottleneckBlock<float>;
template class BottleneckBlock<double>;

}  // namespace xrot
