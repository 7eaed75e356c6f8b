#pragma once

#include "xrot/image.hpp"
#include "xrot/model/network.hpp"
#include "xrot/panorama.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <vector>

namespace xrot {

/// Square scalar map, row-major.
struct Heatmap {
  std::size_t side = 0;
  std::vector<double> values;
};

/// Attention each token of image `image` (0 or 1) receives from the other
/// image's tokens, as a K x K map. Averages over layers and heads unless one
/// layer and/or head is selected.
template <typename T>
Heatmap attention_mass(const AttentionRecord<T>& record, std::size_t item, int image,
                       std::optional<std::size_t> layer = std::nullopt,
                       std::optional<std::size_t> head = std::nullopt);

/// Bilinear resize to `side` x `side` (pixel-center aligned, edge clamped).
Heatmap upsample(const Heatmap& map, std::size_t side);
/// Min-max scaling to [0, 1]; a constant map becomes all 0.5.
void normalize_minmax(Heatmap& map);
std::array<float, 3> jet_color(double t);
/// Upsamples and normalizes `map`, then blends its jet coloring over `base`:
/// out = (1 - alpha) * base + alpha * color.
Image overlay_heatmap(const Image& base, const Heatmap& map, double alpha = 0.55);

/// Runs the model on one pair and writes attn_a.png and attn_b.png into
/// `out_dir`; with `per_head`, also attn_{a,b}_l<layer>_h<head>.png.
/// Returns the written paths. Throws IoFailure.
template <typename T>
std::vector<std::filesystem::path> export_attention(RotationNet<T>& net, const Image& image_a,
                                                    const Image& image_b, const std::filesystem::path& out_dir,
                                                    bool per_head = false);

struct FootprintSet {
  std::vector<Polyline> crop_a;
  std::vector<Polyline> crop_b;
  std::vector<Polyline> predicted;  // crop_a's camera moved by the predicted relative rotation
};

FootprintSet make_footprints(const UnitQuaternion& rotation_a, const UnitQuaternion& rotation_b,
                             const UnitQuaternion& predicted_rel, double fov_deg, std::size_t samples = 256);

/// Ground-truth outlines in green, the prediction as red dots.
Image draw_footprints(const Image& panorama, const FootprintSet& footprints);
/// Throws IoFailure.
void export_footprints(const Image& panorama, const FootprintSet& footprints, const std::filesystem::path& out_path);

}  // namespace xrot
