#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace xrot {

enum class RotationMode { Quaternion, EulerRegression, EulerClassification };
enum class Precision { F32, F64 };

std::string_view to_string(RotationMode m);
RotationMode rotation_mode_from_string(std::string_view s);
std::string_view to_string(Precision p);
Precision precision_from_string(std::string_view s);

/// Network hyperparameters. Defaults are the full-size model; `toy()` is the
/// small variant used for CPU experiments and tests.
struct ModelConfig {
  std::size_t image_size = 128;
  std::size_t stem_channels = 64;
  std::size_t residual_blocks = 3;
  std::size_t conv_a_channels = 512;
  std::size_t conv_b_channels = 256;
  std::size_t feature_channels = 128;  // token width
  std::size_t encoder_layers = 2;
  std::size_t attention_heads = 4;
  std::size_t feedforward_width = 768;
  // Width inside the encoder; 0 keeps the token width. Any other value adds
  // a linear projection in and out of the encoder.
  std::size_t encoder_width = 0;
  double dropout = 0.1;
  bool positional_embedding = true;
  RotationMode rotation_mode = RotationMode::Quaternion;
  Precision precision = Precision::F32;
  std::uint64_t init_seed = 0;

  static ModelConfig toy();

  /// Feature map side; the backbone downsamples by 4.
  std::size_t feature_side() const { return image_size / 4; }
  std::size_t tokens_per_image() const { return feature_side() * feature_side(); }
  std::size_t attention_width() const { return encoder_width == 0 ? feature_channels : encoder_width; }
  std::size_t output_size() const;

  /// Throws InvalidConfig.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace xrot
