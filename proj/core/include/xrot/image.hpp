#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

namespace xrot {

/// Interleaved RGB image with channel values in [0, 1], row-major, row 0 at the top.
class Image {
 public:
  Image() = default;
  Image(std::size_t height, std::size_t width);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  bool empty() const { return pixels_.empty(); }

  float& at(std::size_t row, std::size_t col, std::size_t ch) {
    return pixels_[(row * width_ + col) * 3 + ch];
  }
  float at(std::size_t row, std::size_t col, std::size_t ch) const {
    return pixels_[(row * width_ + col) * 3 + ch];
  }
  std::array<float, 3> rgb(std::size_t row, std::size_t col) const;
  void set_rgb(std::size_t row, std::size_t col, const std::array<float, 3>& c);

  const std::vector<float>& pixels() const { return pixels_; }
  std::vector<float>& pixels() { return pixels_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<float> pixels_;
};

/// Writes an 8-bit RGB PNG. Values are clamped to [0, 1] and rounded.
/// Output bytes depend only on the pixel values. Throws IoFailure.
void write_png(const std::filesystem::path& path, const Image& image);

/// Reads an 8-bit or 16-bit PNG (gray, RGB or RGBA) into RGB [0, 1]. Throws IoFailure.
Image read_png(const std::filesystem::path& path);

/// Round-trips the pixels through 8-bit quantization, matching what
/// write_png followed by read_png would produce.
Image quantize8(const Image& image);

}  // namespace xrot
