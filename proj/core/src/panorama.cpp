#include "xrot/panorama.hpp"

#include "xrot/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace xrot {

namespace {

constexpr double kPi = std::numbers::pi;

Rgb random_color(std::mt19937_64& rng, float lo = 0.05f, float hi = 0.95f) {
  std::uniform_real_distribution<float> d(lo, hi);
  Rgb c;
  for (float& ch : c) ch = d(rng);
  return c;
}

}  // namespace

EquirectCoord dir_to_equirect(const Eigen::Vector3d& dir) {
  const double y = std::clamp(dir.y(), -1.0, 1.0);
  EquirectCoord c;
  c.v = std::acos(y) / kPi;
  if (dir.x() == 0.0 && dir.z() == 0.0) {
    c.u = 0.5;
    return c;
  }
  double u = std::atan2(dir.x(), dir.z()) / (2.0 * kPi) + 0.5;
  if (u >= 1.0) u -= 1.0;
  if (u < 0.0) u += 1.0;
  c.u = u;
  return c;
}

Eigen::Vector3d equirect_to_dir(double u, double v) {
  const double lon = (u - 0.5) * 2.0 * kPi;
  const double colat = v * kPi;
  const double s = std::sin(colat);
  return {s * std::sin(lon), std::cos(colat), s * std::cos(lon)};
}

PanoramaImage::PanoramaImage(Image pixels) : pixels_(std::move(pixels)) {
  if (pixels_.height() == 0 || pixels_.width() != 2 * pixels_.height()) {
    raise(ErrorCode::InvalidArgument, "panorama must have a 2:1 aspect ratio");
  }
}

std::array<float, 3> PanoramaImage::sample(double u, double v) const {
  const auto w = static_cast<long>(width());
  const auto h = static_cast<long>(height());
  const double x = u * static_cast<double>(w) - 0.5;
  const double y = v * static_cast<double>(h) - 0.5;
  const double xf = std::floor(x);
  const double yf = std::floor(y);
  const double ax = x - xf;
  const double ay = y - yf;
  auto wrap = [w](long c) { return ((c % w) + w) % w; };
  auto clampy = [h](long r) { return std::clamp(r, 0L, h - 1); };
  const long x0 = wrap(static_cast<long>(xf));
  const long x1 = wrap(static_cast<long>(xf) + 1);
  const long y0 = clampy(static_cast<long>(yf));
  const long y1 = clampy(static_cast<long>(yf) + 1);

  std::array<float, 3> out{};
  for (std::size_t ch = 0; ch < 3; ++ch) {
    const double top = (1.0 - ax) * pixels_.at(y0, x0, ch) + ax * pixels_.at(y0, x1, ch);
    const double bot = (1.0 - ax) * pixels_.at(y1, x0, ch) + ax * pixels_.at(y1, x1, ch);
    out[ch] = static_cast<float>(std::clamp((1.0 - ay) * top + ay * bot, 0.0, 1.0));
  }
  return out;
}

Eigen::Vector3d camera_ray(const RotationMatrix& world_to_cam, double fov_deg, double x, double y) {
  const double t = std::tan(deg_to_rad(fov_deg) / 2.0);
  const Eigen::Vector3d cam = Eigen::Vector3d(x * t, y * t, 1.0).normalized();
  return world_to_cam.matrix().transpose() * cam;
}

PerspectiveCrop render_crop(const PanoramaImage& pano, const UnitQuaternion& rotation, double fov_deg,
                            std::size_t size) {
  if (!(fov_deg > 0.0 && fov_deg < 180.0)) {
    raise(ErrorCode::InvalidArgument, "field of view must lie in (0, 180) degrees");
  }
  if (size == 0) raise(ErrorCode::InvalidArgument, "crop size must be positive");

  const RotationMatrix r = quat_to_matrix(rotation);
  PerspectiveCrop crop{Image(size, size), rotation, fov_deg};
  const double s = static_cast<double>(size);
  for (std::size_t i = 0; i < size; ++i) {
    const double y = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / s;
    for (std::size_t j = 0; j < size; ++j) {
      const double x = 2.0 * (static_cast<double>(j) + 0.5) / s - 1.0;
      const EquirectCoord c = dir_to_equirect(camera_ray(r, fov_deg, x, y));
      crop.pixels.set_rgb(i, j, pano.sample(c.u, c.v));
    }
  }
  return crop;
}

std::vector<Polyline> crop_footprint(const UnitQuaternion& rotation, double fov_deg,
                                     std::size_t n_boundary_samples) {
  const RotationMatrix r = quat_to_matrix(rotation);
  const std::size_t per_edge = std::max<std::size_t>(1, n_boundary_samples / 4);

  // Clockwise loop in image space: top, right, bottom, left edges.
  const std::array<std::array<double, 4>, 4> edges{{
      {-1.0, 1.0, 1.0, 1.0},
      {1.0, 1.0, 1.0, -1.0},
      {1.0, -1.0, -1.0, -1.0},
      {-1.0, -1.0, -1.0, 1.0},
  }};
  std::vector<EquirectCoord> loop;
  loop.reserve(per_edge * 4 + 1);
  for (const auto& e : edges) {
    for (std::size_t k = 0; k < per_edge; ++k) {
      const double t = static_cast<double>(k) / static_cast<double>(per_edge);
      loop.push_back(dir_to_equirect(camera_ray(r, fov_deg, e[0] + t * (e[2] - e[0]), e[1] + t * (e[3] - e[1]))));
    }
  }
  loop.push_back(loop.front());

  constexpr double kJustBelowOne = 1.0 - std::numeric_limits<double>::epsilon();
  std::vector<Polyline> parts(1);
  parts.back().push_back(loop.front());
  for (std::size_t i = 1; i < loop.size(); ++i) {
    const EquirectCoord& p = loop[i - 1];
    const EquirectCoord& q = loop[i];
    const double du = q.u - p.u;
    if (std::abs(du) > 0.5) {
      // Crossing the seam: p and q sit on opposite sides of u = 0.
      const bool forward = du < 0.0;  // p near 1, q near 0
      const double span = forward ? (1.0 - p.u) + q.u : p.u + (1.0 - q.u);
      const double t = span > 0.0 ? (forward ? 1.0 - p.u : p.u) / span : 0.5;
      const double v = p.v + t * (q.v - p.v);
      parts.back().push_back({forward ? kJustBelowOne : 0.0, v});
      parts.emplace_back();
      parts.back().push_back({forward ? 0.0 : kJustBelowOne, v});
    }
    parts.back().push_back(q);
  }
  if (parts.size() > 1) {
    // The loop started mid-segment; stitch its tail onto its head.
    Polyline& tail = parts.back();
    Polyline& head = parts.front();
    tail.insert(tail.end(), head.begin() + 1, head.end());
    head = std::move(tail);
    parts.pop_back();
  }
  return parts;
}

std::string_view to_string(PanoramaStyle style) {
  return style == PanoramaStyle::Room ? "room" : "street";
}

PanoramaStyle panorama_style_from_string(std::string_view s) {
  if (s == "room") return PanoramaStyle::Room;
  if (s == "street") return PanoramaStyle::Street;
  raise(ErrorCode::InvalidConfig, "unknown panorama style '" + std::string(s) + "' (expected room or street)");
}

int BoxScene::wall_hit(const Eigen::Vector3d& d) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double tx = d.x() > 0 ? x_max / d.x() : (d.x() < 0 ? x_min / d.x() : inf);
  const double tz = d.z() > 0 ? z_max / d.z() : (d.z() < 0 ? z_min / d.z() : inf);
  const double ty = d.y() > 0 ? ceiling_y / d.y() : (d.y() < 0 ? floor_y / d.y() : inf);
  if (ty <= tx && ty <= tz) return -1;
  if (tz <= tx) return d.z() > 0 ? 0 : 2;
  return d.x() > 0 ? 1 : 3;
}

Rgb BoxScene::shade(const Eigen::Vector3d& d) const {
  const int wall = wall_hit(d);
  if (wall < 0) return d.y() > 0 ? ceiling_color : floor_color;

  double t = 0.0;
  switch (wall) {
    case 0: t = z_max / d.z(); break;
    case 1: t = x_max / d.x(); break;
    case 2: t = z_min / d.z(); break;
    default: t = x_min / d.x(); break;
  }
  const Eigen::Vector3d p = t * d;
  const double a = (wall % 2 == 0) ? p.x() : p.z();
  const double y = p.y();

  Rgb c = wall_colors[static_cast<std::size_t>(wall)];
  for (const Band& b : bands) {
    if (b.wall == wall && y >= b.y0 && y <= b.y1) c = b.color;
  }
  for (const Panel& q : panels) {
    if (q.wall == wall && a >= q.a0 && a <= q.a1 && y >= q.y0 && y <= q.y1) c = q.color;
  }
  for (const Stripe& s : stripes) {
    if (s.wall == wall && std::abs(a - s.center) <= s.width / 2.0) c = s.color;
  }
  return c;
}

BoxScene make_box_scene(std::uint64_t seed, PanoramaStyle style) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + (hi - lo) * uni(rng); };

  BoxScene s;
  s.style = style;
  if (style == PanoramaStyle::Room) {
    s.x_min = -in(1.5, 4.0);
    s.x_max = in(1.5, 4.0);
    s.z_min = -in(1.5, 4.0);
    s.z_max = in(1.5, 4.0);
    s.floor_y = -in(1.2, 1.8);
    s.ceiling_y = in(0.8, 1.6);
  } else {
    // A street canyon: facades close on the sides, far away along the street.
    s.x_min = -in(3.0, 6.0);
    s.x_max = in(3.0, 6.0);
    s.z_min = -in(25.0, 40.0);
    s.z_max = in(25.0, 40.0);
    s.floor_y = -in(1.5, 2.0);
    s.ceiling_y = in(12.0, 20.0);
  }
  for (Rgb& c : s.wall_colors) c = random_color(rng, 0.15f, 0.85f);
  s.ceiling_color = style == PanoramaStyle::Room ? random_color(rng, 0.6f, 0.95f) : Rgb{0.55f, 0.7f, 0.95f};
  s.floor_color = random_color(rng, 0.1f, 0.5f);

  for (int wall = 0; wall < 4; ++wall) {
    const bool along_x = wall % 2 == 0;
    const double lo = along_x ? s.x_min : s.z_min;
    const double hi = along_x ? s.x_max : s.z_max;
    const double length = hi - lo;

    const int n_bands = 1 + static_cast<int>(uni(rng) * 2.0);
    for (int k = 0; k < n_bands; ++k) {
      const double y0 = in(s.floor_y, s.ceiling_y - 0.3 * (s.ceiling_y - s.floor_y));
      s.bands.push_back({wall, y0, y0 + in(0.05, 0.12) * (s.ceiling_y - s.floor_y), random_color(rng)});
    }

    const int n_panels = 1 + static_cast<int>(uni(rng) * 3.0);
    for (int k = 0; k < n_panels; ++k) {
      const double w = in(0.08, 0.25) * length;
      const double a0 = in(lo, hi - w);
      const double hgt = in(0.15, 0.45) * (s.ceiling_y - s.floor_y);
      const double y0 = in(s.floor_y, s.ceiling_y - hgt);
      s.panels.push_back({wall, a0, a0 + w, y0, y0 + hgt, random_color(rng)});
    }

    const int n_stripes = 2 + static_cast<int>(uni(rng) * 4.0);
    for (int k = 0; k < n_stripes; ++k) {
      const double width = in(0.02, 0.08) * length;
      s.stripes.push_back({wall, in(lo + width, hi - width), width, random_color(rng)});
    }
  }
  return s;
}

PanoramaImage render_scene(const BoxScene& scene, std::size_t height) {
  Image img(height, 2 * height);
  const double w = static_cast<double>(2 * height);
  const double h = static_cast<double>(height);
  for (std::size_t r = 0; r < height; ++r) {
    const double v = (static_cast<double>(r) + 0.5) / h;
    for (std::size_t c = 0; c < 2 * height; ++c) {
      const double u = (static_cast<double>(c) + 0.5) / w;
      img.set_rgb(r, c, scene.shade(equirect_to_dir(u, v)));
    }
  }
  return PanoramaImage(std::move(img));
}

PanoramaImage synth_panorama(std::uint64_t seed, PanoramaStyle style, std::size_t height) {
  return render_scene(make_box_scene(seed, style), height);
}

}  // namespace xrot
