#include "support.hpp"

#include "xrot/error.hpp"
#include "xrot/harness/pair_data.hpp"
#include "xrot/harness/visualize.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

using namespace xrot;
namespace fs = std::filesystem;

namespace {

UnitQuaternion rel(const UnitQuaternion& a, const UnitQuaternion& b) {
  return matrix_to_quat(relative_rotation(quat_to_matrix(a), quat_to_matrix(b)));
}

DatasetSpec toy_spec() {
  DatasetSpec spec;
  spec.crop_size = 64;
  return spec;
}

// Smallest distance, in panorama pixels, from `p` to any vertex of `lines`,
// measured with horizontal wraparound.
double nearest_px(const EquirectCoord& p, const std::vector<Polyline>& lines, double width, double height) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& line : lines) {
    for (const auto& q : line) {
      double du = std::abs(p.u - q.u);
      du = std::min(du, 1.0 - du) * width;
      const double dv = (p.v - q.v) * height;
      best = std::min(best, std::hypot(du, dv));
    }
  }
  return best;
}

double max_gap_px(const std::vector<Polyline>& from, const std::vector<Polyline>& to, double width, double height) {
  double worst = 0.0;
  for (const auto& line : from)
    for (const auto& p : line) worst = std::max(worst, nearest_px(p, to, width, height));
  return worst;
}

}  // namespace

TEST(Heatmap, AttentionMassIsNonNegativeWithUnitMean) {
  const auto data = test::make_pairs(1, 1, toy_spec());
  RotationNet<float> net(ModelConfig::toy());
  AttentionRecord<float> record;
  {
    ad::NoGradGuard guard;
    predict(net, image_tensor<float>(data[0].image_a), image_tensor<float>(data[0].image_b), &record);
  }
  for (int image : {0, 1}) {
    const auto map = attention_mass(record, 0, image);
    EXPECT_EQ(map.side * map.side, record.tokens_per_image);
    double sum = 0.0;
    for (double v : map.values) {
      EXPECT_GE(v, 0.0);
      sum += v;
    }
    EXPECT_NEAR(sum / static_cast<double>(map.values.size()), 1.0, 1e-5);
    const auto one = attention_mass(record, 0, image, 0, 1);
    EXPECT_EQ(one.values.size(), map.values.size());
  }
  EXPECT_THROW(attention_mass(record, 0, 2), Error);
  EXPECT_THROW(attention_mass(record, 1, 0), Error);
  EXPECT_THROW(attention_mass(record, 0, 0, 5), Error);
}

TEST(Heatmap, UniformAttentionGivesFlatMap) {
  const auto data = test::make_pairs(1, 2, toy_spec());
  RotationNet<float> net(ModelConfig::toy());
  for (auto& nt : net.named_tensors())
    if (nt.name.find(".qkv.") != std::string::npos) std::fill(nt.tensor->data().begin(), nt.tensor->data().end(), 0.0f);
  AttentionRecord<float> record;
  predict(net, image_tensor<float>(data[0].image_a), image_tensor<float>(data[0].image_b), &record);
  auto map = attention_mass(record, 0, 0);
  for (double v : map.values) EXPECT_NEAR(v, 1.0, 1e-6);
  map = upsample(map, 64);
  normalize_minmax(map);
  for (double v : map.values) EXPECT_EQ(v, 0.5);
}

TEST(Heatmap, UpsampleAndNormalize) {
  Heatmap m{2, {0.0, 1.0, 2.0, 3.0}};
  const auto up = upsample(m, 4);
  ASSERT_EQ(up.values.size(), 16u);
  EXPECT_DOUBLE_EQ(up.values[0], 0.0);   // clamped corner
  EXPECT_DOUBLE_EQ(up.values[15], 3.0);
  EXPECT_DOUBLE_EQ(up.values[1], 0.25);  // a quarter of the way between the first two centers
  normalize_minmax(m);
  EXPECT_DOUBLE_EQ(m.values.front(), 0.0);
  EXPECT_DOUBLE_EQ(m.values.back(), 1.0);
  for (double t : {0.0, 0.3, 1.0})
    for (float c : jet_color(t)) {
      EXPECT_GE(c, 0.0f);
      EXPECT_LE(c, 1.0f);
    }
}

TEST(Heatmap, ExportWritesOverlays) {
  test::TempDir dir("attn");
  const auto data = test::make_pairs(1, 3, toy_spec());
  RotationNet<float> net(ModelConfig::toy());
  const auto paths = export_attention(net, data[0].image_a, data[0].image_b, dir.path(), true);
  // 2 averaged maps plus one per image, layer and head.
  EXPECT_EQ(paths.size(), 2u + 2u * 1u * 2u);
  for (const auto& p : paths) {
    const Image img = read_png(p);
    EXPECT_EQ(img.height(), 64u);
    EXPECT_EQ(img.width(), 64u);
  }
  EXPECT_TRUE(fs::exists(dir.path() / "attn_a.png"));
  EXPECT_TRUE(fs::exists(dir.path() / "attn_b_l0_h1.png"));
  const Image overlay = overlay_heatmap(data[0].image_a, Heatmap{2, {0, 1, 2, 3}});
  for (float v : overlay.pixels()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Footprints, TrueRelativeRotationLandsOnSecondCrop) {
  const double width = 1024, height = 512;
  std::mt19937_64 rng(4);
  DatasetSpec spec;
  for (int t = 0; t < 200; ++t) {
    const PairPose pose = sample_pair_pose(rng, spec);
    const auto qa = pose.a.rotation, qb = pose.b.rotation;
    const auto fp = make_footprints(qa, qb, pose.rel_quat, spec.fov_deg);
    ASSERT_FALSE(fp.predicted.empty());
    EXPECT_LT(max_gap_px(fp.predicted, fp.crop_b, width, height), 1.0);
    EXPECT_LT(max_gap_px(fp.crop_b, fp.predicted, width, height), 1.0);
    const auto self = make_footprints(qa, qb, UnitQuaternion::identity(), spec.fov_deg);
    EXPECT_LT(max_gap_px(self.predicted, self.crop_a, width, height), 1.0);
  }
}

TEST(Footprints, DrawnPredictionCoversSecondCrop) {
  const PanoramaImage pano = synth_panorama(5, PanoramaStyle::Room, 256);
  const auto qa = yaw_pitch_to_quat({-20, 5}), qb = yaw_pitch_to_quat({35, -10});
  const FootprintSet fp = make_footprints(qa, qb, rel(qa, qb), 90.0);
  const Image truth = draw_footprints(pano.image(), FootprintSet{fp.crop_a, fp.crop_b, {}});
  const Image exact = draw_footprints(pano.image(), fp);
  // Every red pixel of the exact prediction sits within one pixel of crop b's green outline.
  auto green = [&](long r, long c) {
    const long w = static_cast<long>(truth.width());
    const auto px = truth.rgb(static_cast<std::size_t>(r), static_cast<std::size_t>((c + w) % w));
    return px[1] > 0.85f && px[0] < 0.15f;
  };
  std::size_t red = 0;
  for (std::size_t r = 1; r + 1 < exact.height(); ++r)
    for (std::size_t c = 0; c < exact.width(); ++c) {
      const auto px = exact.rgb(r, c);
      if (!(px[0] > 0.95f && px[1] < 0.15f)) continue;
      ++red;
      bool near = false;
      for (long dr = -1; dr <= 1; ++dr)
        for (long dc = -1; dc <= 1; ++dc) near = near || green(long(r) + dr, long(c) + dc);
      EXPECT_TRUE(near) << "red pixel at " << r << "," << c;
    }
  EXPECT_GT(red, 100u);
}

TEST(Footprints, SeamCrossingDrawsNoStreak) {
  const PanoramaImage pano = synth_panorama(6, PanoramaStyle::Room, 256);
  const auto q = yaw_pitch_to_quat({180, 0});  // centered on the seam
  const auto fp = make_footprints(q, q, UnitQuaternion::identity(), 90.0);
  EXPECT_GE(fp.crop_a.size(), 2u);
  const Image drawn = draw_footprints(pano.image(), fp);
  const std::size_t w = drawn.width();
  std::size_t changed_near_seam = 0;
  for (std::size_t r = 0; r < drawn.height(); ++r)
    for (std::size_t c = 0; c < w; ++c) {
      if (drawn.rgb(r, c) == pano.image().rgb(r, c)) continue;
      const double u = (static_cast<double>(c) + 0.5) / static_cast<double>(w);
      // The outline spans u in [0.875, 1) and [0, 0.125]; nothing may be drawn in between.
      EXPECT_TRUE(u < 0.2 || u > 0.8) << "pixel drawn at row " << r << " col " << c;
      ++changed_near_seam;
    }
  EXPECT_GT(changed_near_seam, 0u);
}

TEST(Footprints, ExportWritesPanoramaSizedPng) {
  test::TempDir dir("fp");
  const PanoramaImage pano = synth_panorama(7, PanoramaStyle::Street, 128);
  const auto q = yaw_pitch_to_quat({10, 0});
  export_footprints(pano.image(), make_footprints(q, q, UnitQuaternion::identity(), 90.0), dir.path() / "fp.png");
  const Image img = read_png(dir.path() / "fp.png");
  EXPECT_EQ(img.width(), 256u);
  EXPECT_EQ(img.height(), 128u);
  // A regular file where a directory is needed.
  EXPECT_THROW(export_footprints(pano.image(), {}, dir.path() / "fp.png" / "fp.png"), Error);
}
