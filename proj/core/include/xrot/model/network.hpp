#pragma once

#include "xrot/autodiff/tensor.hpp"
#include "xrot/geometry.hpp"
#include "xrot/model/config.hpp"
#include "xrot/model/layers.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace xrot {

/// Additive cross-attention mask over 2n tokens: -inf where both tokens come
/// from the same image, 0 elsewhere. Shape [2n, 2n].
template <typename T>
ad::Tensor<T> build_mask(std::size_t tokens_per_image);

/// Post-softmax attention weights, one [B, heads, 2n, 2n] tensor per layer.
template <typename T>
struct AttentionRecord {
  std::size_t tokens_per_image = 0;
  std::size_t heads = 0;
  std::vector<ad::Tensor<T>> layers;

  std::size_t batch() const { return layers.empty() ? 0 : layers.front().size(0); }
  std::size_t tokens() const { return 2 * tokens_per_image; }
  T at(std::size_t layer, std::size_t item, std::size_t head, std::size_t row, std::size_t col) const;
};

struct ForwardOptions {
  bool train = false;
  // Seeds the dropout masks of this pass; only used in train mode.
  std::uint64_t dropout_seed = 0;
};

/// One post-norm encoder layer: masked multi-head attention and a ReLU
/// feedforward, each followed by dropout, a residual sum and LayerNorm.
template <typename T>
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(std::size_t width, std::size_t heads, std::size_t ff_width, double dropout, std::mt19937_64& rng);

  /// x is [B, N, width]; `attention`, when given, receives the weights.
  ad::Tensor<T> operator()(const ad::Tensor<T>& x, const ad::Tensor<T>& mask, bool train, std::mt19937_64& rng,
                           ad::Tensor<T>* attention) const;
  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out);

 private:
  Linear<T> qkv_, out_, ff1_, ff2_;
  LayerNorm<T> norm1_, norm2_;
  std::size_t heads_ = 1;
  T dropout_ = T(0);
};

/// Siamese backbone, cross-attention encoder and rotation regressor.
/// Forward passes in eval mode only read the parameters, so one instance may
/// serve concurrent eval passes.
template <typename T>
class RotationNet {
 public:
  /// Parameters are initialized from `cfg.init_seed`. Throws InvalidConfig.
  explicit RotationNet(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  /// images [B, 3, S, S] -> feature maps [B, c, K, K].
  ad::Tensor<T> backbone(const ad::Tensor<T>& images, bool train);
  /// Two [B, c, K, K] maps -> tokens [B, 2K^2, c]; rows below K^2 come from
  /// the first map in row-major spatial order.
  ad::Tensor<T> tokenize(const ad::Tensor<T>& first, const ad::Tensor<T>& second) const;
  ad::Tensor<T> encode(const ad::Tensor<T>& tokens, const ForwardOptions& opts, AttentionRecord<T>* record) const;
  /// Encoded tokens [B, 2K^2, c] -> raw outputs [B, output_size].
  ad::Tensor<T> regress(const ad::Tensor<T>& encoded, bool train);

  /// Both image batches [B, 3, S, S] -> raw outputs [B, output_size].
  ad::Tensor<T> forward(const ad::Tensor<T>& image_a, const ad::Tensor<T>& image_b, const ForwardOptions& opts,
                        AttentionRecord<T>* record = nullptr);

  /// Every parameter and buffer, in a fixed order.
  std::vector<NamedTensor<T>> named_tensors();
  std::vector<ad::Tensor<T>> parameters();
  const ad::Tensor<T>& mask() const { return mask_; }
  ad::Tensor<T>& position_embedding() { return position_; }

 private:
  ModelConfig cfg_;
  Conv2d<T> stem_conv_;
  BatchNorm<T> stem_bn_;
  std::vector<BasicBlock<T>> blocks_;
  Conv2d<T> conv_a_, conv_b_;
  BatchNorm<T> bn_a_, bn_b_;
  Conv2d<T> to_tokens_;
  ad::Tensor<T> position_;
  std::optional<Linear<T>> in_proj_, out_proj_;
  std::vector<EncoderLayer<T>> layers_;
  BottleneckBlock<T> reg1_, reg2_;
  Linear<T> head_;
  ad::Tensor<T> mask_;
};

/// Eval-mode prediction for a single pair of [1, 3, S, S] images: the decoded
/// rotation as a canonical unit quaternion.
template <typename T>
UnitQuaternion predict(RotationNet<T>& net, const ad::Tensor<T>& image_a, const ad::Tensor<T>& image_b,
                       AttentionRecord<T>* record = nullptr);

extern template class EncoderLayer<float>;
extern template class EncoderLayer<double>;
extern template class RotationNet<float>;
extern template class RotationNet<double>;

}  // namespace xrot
