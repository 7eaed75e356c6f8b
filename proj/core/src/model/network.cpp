#include "xrot/model/network.hpp"

#include "xrot/autodiff/ops.hpp"
#include "xrot/error.hpp"
#include "xrot/model/loss.hpp"
#include "xrot/seeding.hpp"

#include <cmath>
#include <limits>

namespace xrot {

using ad::Shape;
using ad::Tensor;

namespace {
constexpr std::uint64_t kDropoutStream = 11;
}

template <typename T>
Tensor<T> build_mask(std::size_t tokens_per_image) {
  if (tokens_per_image == 0) raise(ErrorCode::InvalidArgument, "build_mask needs at least one token per image");
  const std::size_t n = tokens_per_image, total = 2 * n;
  ad::Buffer<T> data(total * total, T(0));
  const T ninf = -std::numeric_limits<T>::infinity();
  for (std::size_t i = 0; i < total; ++i) {
    for (std::size_t j = 0; j < total; ++j) {
      if ((i < n) == (j < n)) data[i * total + j] = ninf;
    }
  }
  return Tensor<T>::from_data({total, total}, std::move(data));
}

template <typename T>
T AttentionRecord<T>::at(std::size_t layer, std::size_t item, std::size_t head, std::size_t row,
                         std::size_t col) const {
  const std::size_t n = tokens();
  return layers.at(layer).data()[(((item * heads) + head) * n + row) * n + col];
}

template <typename T>
EncoderLayer<T>::EncoderLayer(std::size_t width, std::size_t heads, std::size_t ff_width, double dropout,
                              std::mt19937_64& rng)
    : qkv_(width, 3 * width, rng),
      out_(width, width, rng),
      ff1_(width, ff_width, rng),
      ff2_(ff_width, width, rng),
      norm1_(width),
      norm2_(width),
      heads_(heads),
      dropout_(static_cast<T>(dropout)) {}

template <typename T>
Tensor<T> EncoderLayer<T>::operator()(const Tensor<T>& x, const Tensor<T>& mask, bool train, std::mt19937_64& rng,
                                      Tensor<T>* attention) const {
  const Shape& s = x.shape();
  if (s.size() != 3) ad::shape_error("encoder layer", s, Shape{0, 0, 0});
  const std::size_t batch = s[0], tokens = s[1], width = s[2];
  const std::size_t head_width = width / heads_;

  Tensor<T> qkv = ad::reshape(qkv_(x), {batch, tokens, 3, heads_, head_width});
  qkv = ad::permute(qkv, {2, 0, 3, 1, 4});  // [3, B, h, N, dh]
  const Shape head_shape{batch, heads_, tokens, head_width};
  Tensor<T> q = ad::reshape(ad::slice(qkv, 0, 0, 1), head_shape);
  Tensor<T> k = ad::reshape(ad::slice(qkv, 0, 1, 1), head_shape);
  Tensor<T> v = ad::reshape(ad::slice(qkv, 0, 2, 1), head_shape);

  Tensor<T> scores = ad::scale(ad::matmul(q, k, false, true), T(1) / std::sqrt(static_cast<T>(head_width)));
  Tensor<T> weights = ad::masked_softmax(scores, mask, -1);
  if (attention) *attention = weights.detach();
  weights = ad::dropout(weights, dropout_, train, rng);

  Tensor<T> ctx = ad::permute(ad::matmul(weights, v), {0, 2, 1, 3});  // [B, N, h, dh]
  ctx = out_(ad::reshape(ctx, {batch, tokens, width}));
  Tensor<T> h = norm1_(ad::add(x, ad::dropout(ctx, dropout_, train, rng)));

  Tensor<T> ff = ad::dropout(ad::relu(ff1_(h)), dropout_, train, rng);
  ff = ad::dropout(ff2_(ff), dropout_, train, rng);
  return norm2_(ad::add(h, ff));
}

template <typename T>
void EncoderLayer<T>::collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) {
  qkv_.collect(prefix + ".qkv", out);
  out_.collect(prefix + ".out", out);
  norm1_.collect(prefix + ".norm1", out);
  ff1_.collect(prefix + ".ff1", out);
  ff2_.collect(prefix + ".ff2", out);
  norm2_.collect(prefix + ".norm2", out);
}

template <typename T>
RotationNet<T>::RotationNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.init_seed);
  const std::size_t c = cfg_.feature_channels;

  stem_conv_ = Conv2d<T>(3, cfg_.stem_channels, 7, 2, 3, false, rng);
  stem_bn_ = BatchNorm<T>(cfg_.stem_channels);
  for (std::size_t i = 0; i < cfg_.residual_blocks; ++i) {
    blocks_.emplace_back(cfg_.stem_channels, cfg_.stem_channels, i == 0 ? 2 : 1, rng);
  }
  conv_a_ = Conv2d<T>(cfg_.stem_channels, cfg_.conv_a_channels, 3, 1, 1, false, rng);
  bn_a_ = BatchNorm<T>(cfg_.conv_a_channels);
  conv_b_ = Conv2d<T>(cfg_.conv_a_channels, cfg_.conv_b_channels, 3, 1, 1, false, rng);
  bn_b_ = BatchNorm<T>(cfg_.conv_b_channels);
  to_tokens_ = Conv2d<T>(cfg_.conv_b_channels, c, 1, 1, 0, true, rng);

  const std::size_t n = cfg_.tokens_per_image();
  std::normal_distribution<double> pos_dist(0.0, 0.02);
  ad::Buffer<T> pos(2 * n * c, T(0));
  for (T& p : pos) p = static_cast<T>(pos_dist(rng));
  position_ = Tensor<T>::from_data({2 * n, c}, std::move(pos), cfg_.positional_embedding);
  if (!cfg_.positional_embedding) std::fill(position_.data().begin(), position_.data().end(), T(0));

  const std::size_t width = cfg_.attention_width();
  if (width != c) {
    in_proj_.emplace(c, width, rng);
    out_proj_.emplace(width, c, rng);
  }
  for (std::size_t i = 0; i < cfg_.encoder_layers; ++i) {
    layers_.emplace_back(width, cfg_.attention_heads, cfg_.feedforward_width, cfg_.dropout, rng);
  }

  reg1_ = BottleneckBlock<T>(c, c, 4 * c, rng);
  reg2_ = BottleneckBlock<T>(4 * c, c / 2, 2 * c, rng);
  const std::size_t side = cfg_.feature_side() / 16;
  head_ = Linear<T>(2 * c * side * side, cfg_.output_size(), rng);
  mask_ = build_mask<T>(n);
}

template <typename T>
Tensor<T> RotationNet<T>::backbone(const Tensor<T>& images, bool train) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != cfg_.image_size || s[3] != cfg_.image_size) {
    ad::shape_error("backbone", s, Shape{0, 3, cfg_.image_size, cfg_.image_size});
  }
  Tensor<T> h = ad::relu(stem_bn_(stem_conv_(images), train));
  for (auto& block : blocks_) h = block(h, train);
  h = ad::relu(bn_a_(conv_a_(h), train));
  h = ad::relu(bn_b_(conv_b_(h), train));
  return to_tokens_(h);
}

template <typename T>
Tensor<T> RotationNet<T>::tokenize(const Tensor<T>& first, const Tensor<T>& second) const {
  if (first.shape() != second.shape() || first.dim() != 4) ad::shape_error("tokenize", first.shape(), second.shape());
  const std::size_t batch = first.size(0), c = first.size(1), n = first.size(2) * first.size(3);
  if (c != cfg_.feature_channels || n != cfg_.tokens_per_image()) {
    ad::shape_error("tokenize", first.shape(), Shape{batch, cfg_.feature_channels, cfg_.feature_side(),
                                                     cfg_.feature_side()});
  }
  const std::vector<Tensor<T>> both{ad::reshape(first, {batch, c, n}), ad::reshape(second, {batch, c, n})};
  Tensor<T> t = ad::concat(std::span<const Tensor<T>>(both), 2);  // [B, c, 2n]
  t = ad::transpose(t, 1, 2);                                     // [B, 2n, c]
  return ad::add(t, position_);
}

template <typename T>
Tensor<T> RotationNet<T>::encode(const Tensor<T>& tokens, const ForwardOptions& opts,
                                 AttentionRecord<T>* record) const {
  std::mt19937_64 rng(derive_seed(opts.dropout_seed, kDropoutStream, 0));
  if (record) {
    record->tokens_per_image = cfg_.tokens_per_image();
    record->heads = cfg_.attention_heads;
    record->layers.assign(layers_.size(), Tensor<T>());
  }
  Tensor<T> h = in_proj_ ? (*in_proj_)(tokens) : tokens;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h, mask_, opts.train, rng, record ? &record->layers[i] : nullptr);
  }
  return out_proj_ ? (*out_proj_)(h) : h;
}

template <typename T>
Tensor<T> RotationNet<T>::regress(const Tensor<T>& encoded, bool train) {
  const std::size_t n = cfg_.tokens_per_image(), c = cfg_.feature_channels, side = cfg_.feature_side();
  if (encoded.dim() != 3 || encoded.size(1) != 2 * n || encoded.size(2) != c) {
    ad::shape_error("regress", encoded.shape(), Shape{0, 2 * n, c});
  }
  const std::size_t batch = encoded.size(0);
  Tensor<T> h = ad::transpose(ad::slice(encoded, 1, 0, n), 1, 2);  // [B, c, n]
  h = ad::reshape(h, {batch, c, side, side});
  h = reg2_(reg1_(h, train), train);
  return head_(ad::reshape(h, {batch, h.numel() / batch}));
}

template <typename T>
Tensor<T> RotationNet<T>::forward(const Tensor<T>& image_a, const Tensor<T>& image_b, const ForwardOptions& opts,
                                  AttentionRecord<T>* record) {
  if (image_a.shape() != image_b.shape()) ad::shape_error("forward", image_a.shape(), image_b.shape());
  const std::size_t batch = image_a.size(0);
  const std::vector<Tensor<T>> both{image_a, image_b};
  // One backbone pass over both images: the same weights and batch statistics.
  Tensor<T> features = backbone(ad::concat(std::span<const Tensor<T>>(both), 0), opts.train);
  Tensor<T> tokens = tokenize(ad::slice(features, 0, 0, batch), ad::slice(features, 0, batch, batch));
  return regress(encode(tokens, opts, record), opts.train);
}

template <typename T>
std::vector<NamedTensor<T>> RotationNet<T>::named_tensors() {
  std::vector<NamedTensor<T>> out;
  stem_conv_.collect("backbone.stem.conv", out);
  stem_bn_.collect("backbone.stem.bn", out);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect("backbone.block" + std::to_string(i), out);
  conv_a_.collect("backbone.conv_a", out);
  bn_a_.collect("backbone.bn_a", out);
  conv_b_.collect("backbone.conv_b", out);
  bn_b_.collect("backbone.bn_b", out);
  to_tokens_.collect("backbone.to_tokens", out);
  out.push_back({"tokens.position", &position_, cfg_.positional_embedding});
  if (in_proj_) in_proj_->collect("encoder.in_proj", out);
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i].collect("encoder.layer" + std::to_string(i), out);
  if (out_proj_) out_proj_->collect("encoder.out_proj", out);
  reg1_.collect("regressor.block1", out);
  reg2_.collect("regressor.block2", out);
  head_.collect("regressor.head", out);
  return out;
}

template <typename T>
std::vector<Tensor<T>> RotationNet<T>::parameters() {
  std::vector<Tensor<T>> out;
  for (auto& nt : named_tensors()) {
    if (nt.trainable) out.push_back(*nt.tensor);
  }
  return out;
}

template <typename T>
UnitQuaternion predict(RotationNet<T>& net, const Tensor<T>& image_a, const Tensor<T>& image_b,
                       AttentionRecord<T>* record) {
  if (image_a.dim() != 4 || image_a.size(0) != 1) ad::shape_error("predict", image_a.shape(), Shape{1, 3, 0, 0});
  ad::NoGradGuard no_grad;
  const Tensor<T> out = net.forward(image_a, image_b, ForwardOptions{}, record);
  return decode_output<T>(out.data(), net.config().rotation_mode);
}

template Tensor<float> build_mask<float>(std::size_t);
template Tensor<double> build_mask<double>(std::size_t);
template struct AttentionRecord<float>;
template struct AttentionRecord<double>;
template class EncoderLayer<float>;
template class EncoderLayer<double>;
template class RotationNet<float>;
template class RotationNet<double>;
template UnitQuaternion predict(RotationNet<float>&, const Tensor<float>&, const Tensor<float>&,
                                AttentionRecord<float>*);
template UnitQuaternion predict(RotationNet<double>&, const Tensor<double>&, const Tensor<double>&,
                                AttentionRecord<double>*);

}  // namespace xrot
