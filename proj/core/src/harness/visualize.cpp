#include "xrot/harness/visualize.hpp"

#include "xrot/error.hpp"
#include "xrot/harness/pair_data.hpp"

#include <algorithm>
#include <cmath>

namespace xrot {

namespace fs = std::filesystem;

template <typename T>
Heatmap attention_mass(const AttentionRecord<T>& record, std::size_t item, int image,
                       std::optional<std::size_t> layer, std::optional<std::size_t> head) {
  if (image != 0 && image != 1) raise(ErrorCode::InvalidArgument, "image index must be 0 or 1");
  if (record.layers.empty()) raise(ErrorCode::InvalidArgument, "attention record is empty");
  const std::size_t n = record.tokens_per_image;
  const std::size_t side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
  if (side * side != n) raise(ErrorCode::InvalidArgument, "token count is not a square");
  if (item >= record.batch()) raise(ErrorCode::InvalidArgument, "batch item out of range");
  if (layer && *layer >= record.layers.size()) raise(ErrorCode::InvalidArgument, "layer out of range");
  if (head && *head >= record.heads) raise(ErrorCode::InvalidArgument, "head out of range");

  const std::size_t l0 = layer.value_or(0), l1 = layer ? *layer + 1 : record.layers.size();
  const std::size_t h0 = head.value_or(0), h1 = head ? *head + 1 : record.heads;
  // Receivers are this image's tokens; senders are the other image's.
  const std::size_t recv = image == 0 ? 0 : n, send = image == 0 ? n : 0;
  Heatmap map{side, std::vector<double>(n, 0.0)};
  for (std::size_t l = l0; l < l1; ++l) {
    for (std::size_t h = h0; h < h1; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) map.values[j] += record.at(l, item, h, send + i, recv + j);
      }
    }
  }
  const double count = static_cast<double>((l1 - l0) * (h1 - h0));
  for (double& v : map.values) v /= count;
  return map;
}

Heatmap upsample(const Heatmap& map, std::size_t side) {
  Heatmap out{side, std::vector<double>(side * side)};
  const double scale = static_cast<double>(map.side) / static_cast<double>(side);
  const double last = static_cast<double>(map.side - 1);
  for (std::size_t r = 0; r < side; ++r) {
    const double y = std::clamp((r + 0.5) * scale - 0.5, 0.0, last);
    const std::size_t y0 = static_cast<std::size_t>(y), y1 = std::min(y0 + 1, map.side - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < side; ++c) {
      const double x = std::clamp((c + 0.5) * scale - 0.5, 0.0, last);
      const std::size_t x0 = static_cast<std::size_t>(x), x1 = std::min(x0 + 1, map.side - 1);
      const double fx = x - static_cast<double>(x0);
      const double top = map.values[y0 * map.side + x0] * (1 - fx) + map.values[y0 * map.side + x1] * fx;
      const double bot = map.values[y1 * map.side + x0] * (1 - fx) + map.values[y1 * map.side + x1] * fx;
      out.values[r * side + c] = top * (1 - fy) + bot * fy;
    }
  }
  return out;
}

void normalize_minmax(Heatmap& map) {
  if (map.values.empty()) return;
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  const double min = *lo, range = *hi - *lo;
  if (!(range > 0.0)) {
    std::fill(map.values.begin(), map.values.end(), 0.5);
    return;
  }
  for (double& v : map.values) v = (v - min) / range;
}

std::array<float, 3> jet_color(double t) {
  auto ch = [t](double center) { return static_cast<float>(std::clamp(1.5 - std::abs(4.0 * t - center), 0.0, 1.0)); };
  return {ch(3.0), ch(2.0), ch(1.0)};
}

Image overlay_heatmap(const Image& base, const Heatmap& map, double alpha) {
  if (base.height() != base.width()) raise(ErrorCode::InvalidArgument, "overlay expects a square image");
  Heatmap up = upsample(map, base.height());
  normalize_minmax(up);
  Image out(base.height(), base.width());
  for (std::size_t r = 0; r < base.height(); ++r) {
    for (std::size_t c = 0; c < base.width(); ++c) {
      const auto color = jet_color(up.values[r * base.width() + c]);
      for (std::size_t k = 0; k < 3; ++k) {
        out.at(r, c, k) = static_cast<float>((1.0 - alpha) * base.at(r, c, k) + alpha * color[k]);
      }
    }
  }
  return out;
}

template <typename T>
std::vector<fs::path> export_attention(RotationNet<T>& net, const Image& image_a, const Image& image_b,
                                       const fs::path& out_dir, bool per_head) {
  AttentionRecord<T> record;
  predict(net, image_tensor<T>(image_a), image_tensor<T>(image_b), &record);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) raise(ErrorCode::IoFailure, "cannot create " + out_dir.string() + ": " + ec.message());

  std::vector<fs::path> written;
  const Image* images[2] = {&image_a, &image_b};
  const char* tags[2] = {"a", "b"};
  for (int i = 0; i < 2; ++i) {
    const fs::path p = out_dir / (std::string("attn_") + tags[i] + ".png");
    write_png(p, overlay_heatmap(*images[i], attention_mass(record, 0, i)));
    written.push_back(p);
    if (!per_head) continue;
    for (std::size_t l = 0; l < record.layers.size(); ++l) {
      for (std::size_t h = 0; h < record.heads; ++h) {
        const fs::path ph = out_dir / ("attn_" + std::string(tags[i]) + "_l" + std::to_string(l) + "_h" +
                                       std::to_string(h) + ".png");
        write_png(ph, overlay_heatmap(*images[i], attention_mass(record, 0, i, l, h)));
        written.push_back(ph);
      }
    }
  }
  return written;
}

FootprintSet make_footprints(const UnitQuaternion& rotation_a, const UnitQuaternion& rotation_b,
                             const UnitQuaternion& predicted_rel, double fov_deg, std::size_t samples) {
  const RotationMatrix predicted_b = quat_to_matrix(predicted_rel) * quat_to_matrix(rotation_a);
  return {crop_footprint(rotation_a, fov_deg, samples), crop_footprint(rotation_b, fov_deg, samples),
          crop_footprint(matrix_to_quat(predicted_b), fov_deg, samples)};
}

namespace {

void stamp(Image& img, double x, double y, const std::array<float, 3>& color, int radius) {
  const long cx = static_cast<long>(std::floor(x)), cy = static_cast<long>(std::floor(y));
  for (long dy = -radius; dy <= radius; ++dy) {
    for (long dx = -radius; dx <= radius; ++dx) {
      const long r = cy + dy;
      if (r < 0 || r >= static_cast<long>(img.height())) continue;
      long c = (cx + dx) % static_cast<long>(img.width());
      if (c < 0) c += static_cast<long>(img.width());
      img.set_rgb(static_cast<std::size_t>(r), static_cast<std::size_t>(c), color);
    }
  }
}

// Walks each polyline in half-pixel steps; `dash` > 0 draws only every
// other run of `dash` pixels.
void draw_polylines(Image& img, const std::vector<Polyline>& lines, const std::array<float, 3>& color, double dash,
                    int radius) {
  const double w = static_cast<double>(img.width()), h = static_cast<double>(img.height());
  for (const Polyline& line : lines) {
    double travelled = 0.0;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
      const double x0 = line[i].u * w, y0 = line[i].v * h;
      const double x1 = line[i + 1].u * w, y1 = line[i + 1].v * h;
      const double len = std::hypot(x1 - x0, y1 - y0);
      const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.5)));
      for (int s = 0; s <= steps; ++s) {
        const double t = static_cast<double>(s) / steps;
        const double along = travelled + t * len;
        if (dash > 0.0 && static_cast<long>(along / dash) % 2 == 1) continue;
        stamp(img, x0 + t * (x1 - x0), y0 + t * (y1 - y0), color, radius);
      }
      travelled += len;
    }
  }
}

}  // namespace

Image draw_footprints(const Image& panorama, const FootprintSet& footprints) {
  Image out = panorama;
  const std::array<float, 3> green{0.1f, 0.9f, 0.2f}, red{1.0f, 0.1f, 0.1f};
  draw_polylines(out, footprints.crop_a, green, 0.0, 1);
  draw_polylines(out, footprints.crop_b, green, 0.0, 1);
  draw_polylines(out, footprints.predicted, red, 3.0, 1);
  return out;
}

void export_footprints(const Image& panorama, const FootprintSet& footprints, const fs::path& out_path) {
  if (out_path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(out_path.parent_path(), ec);
    if (ec) raise(ErrorCode::IoFailure, "cannot create " + out_path.parent_path().string() + ": " + ec.message());
  }
  write_png(out_path, draw_footprints(panorama, footprints));
}

template Heatmap attention_mass(const AttentionRecord<float>&, std::size_t, int, std::optional<std::size_t>,
                                std::optional<std::size_t>);
template Heatmap attention_mass(const AttentionRecord<double>&, std::size_t, int, std::optional<std::size_t>,
                                std::optional<std::size_t>);
template std::vector<fs::path> export_attention(RotationNet<float>&, const Image&, const Image&, const fs::path&,
                                                bool);
template std::vector<fs::path> export_attention(RotationNet<double>&, const Image&, const Image&, const fs::path&,
                                                bool);

}  // namespace xrot
