#include "xrot/model/config.hpp"

#include "xrot/error.hpp"

#include <string>

namespace xrot {

std::string_view to_string(RotationMode m) {
  switch (m) {
    case RotationMode::Quaternion: return "quaternion";
    case RotationMode::EulerRegression: return "euler-regression";
    case RotationMode::EulerClassification: return "euler-classification";
  }
  return "quaternion";
}

RotationMode rotation_mode_from_string(std::string_view s) {
  if (s == "quaternion") return RotationMode::Quaternion;
  if (s == "euler-regression") return RotationMode::EulerRegression;
  if (s == "euler-classification") return RotationMode::EulerClassification;
  raise(ErrorCode::InvalidConfig, "unknown rotation mode '" + std::string(s) +
                                      "' (expected quaternion, euler-regression or euler-classification)");
}

std::string_view to_string(Precision p) { return p == Precision::F32 ? "f32" : "f64"; }

Precision precision_from_string(std::string_view s) {
  if (s == "f32") return Precision::F32;
  if (s == "f64") return Precision::F64;
  raise(ErrorCode::InvalidConfig, "unknown precision '" + std::string(s) + "' (expected f32 or f64)");
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.image_size = 64;
  c.stem_channels = 16;
  c.residual_blocks = 2;
  c.conv_a_channels = 128;
  c.conv_b_channels = 64;
  c.feature_channels = 32;
  c.encoder_layers = 1;
  c.attention_heads = 2;
  c.feedforward_width = 192;
  return c;
}

std::size_t ModelConfig::output_size() const {
  switch (rotation_mode) {
    case RotationMode::Quaternion: return 4;
    case RotationMode::EulerRegression: return 2;
    case RotationMode::EulerClassification: return 720;
  }
  return 4;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { raise(ErrorCode::InvalidConfig, m); };
  if (image_size == 0 || image_size % 64 != 0) {
    fail("image_size must be a positive multiple of 64, got " + std::to_string(image_size));
  }
  if (residual_blocks < 1 || residual_blocks > 4) {
    fail("residual_blocks must lie in [1, 4], got " + std::to_string(residual_blocks));
  }
  if (stem_channels == 0 || conv_a_channels == 0 || conv_b_channels == 0) fail("channel counts must be positive");
  if (feature_channels < 2 || feature_channels % 2 != 0) fail("feature_channels must be even and >= 2");
  if (encoder_layers == 0) fail("encoder_layers must be >= 1");
  if (attention_heads == 0) fail("attention_heads must be >= 1");
  if (attention_width() % attention_heads != 0) {
    fail("attention width " + std::to_string(attention_width()) + " is not divisible by " +
         std::to_string(attention_heads) + " heads");
  }
  if (feedforward_width == 0) fail("feedforward_width must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must lie in [0, 1)");
}

}  // namespace xrot
