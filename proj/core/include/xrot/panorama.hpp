#pragma once

#include "xrot/geometry.hpp"
#include "xrot/image.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace xrot {

/// Equirectangular texture coordinate. u runs with azimuth (u = 0.5 looks
/// along +z, the seam u = 0 sits at -z), v runs from the zenith (0) to the nadir (1).
struct EquirectCoord {
  double u = 0.5;
  double v = 0.5;
};

/// u = (atan2(x, z) / 2pi + 0.5) mod 1, v = acos(y) / pi. At the poles u is 0.5.
EquirectCoord dir_to_equirect(const Eigen::Vector3d& dir);
Eigen::Vector3d equirect_to_dir(double u, double v);

/// Full-sphere 2:1 panorama.
class PanoramaImage {
 public:
  PanoramaImage() = default;
  /// Throws InvalidArgument unless width == 2 * height.
  explicit PanoramaImage(Image pixels);

  const Image& image() const { return pixels_; }
  std::size_t height() const { return pixels_.height(); }
  std::size_t width() const { return pixels_.width(); }

  /// Bilinear lookup; wraps horizontally and clamps vertically.
  std::array<float, 3> sample(double u, double v) const;

 private:
  Image pixels_;
};

struct PerspectiveCrop {
  Image pixels;
  UnitQuaternion rotation;  // world-to-camera
  double fov_deg = 90.0;
};

/// World-frame unit ray through normalized image-plane coordinates
/// (x, y) in [-1, 1]^2, where (1, 0) is the right border and (0, 1) the top border.
Eigen::Vector3d camera_ray(const RotationMatrix& world_to_cam, double fov_deg, double x, double y);

/// Pinhole view of `pano` with square `size` x `size` pixels and horizontal FOV `fov_deg`.
/// Throws InvalidArgument for fov outside (0, 180) or size 0.
PerspectiveCrop render_crop(const PanoramaImage& pano, const UnitQuaternion& rotation, double fov_deg,
                            std::size_t size);

using Polyline = std::vector<EquirectCoord>;

/// Outline of a crop's border projected into panorama coordinates. The closed
/// loop is split into separate polylines wherever it crosses the u = 0 seam.
std::vector<Polyline> crop_footprint(const UnitQuaternion& rotation, double fov_deg,
                                     std::size_t n_boundary_samples);

enum class PanoramaStyle { Room, Street };

std::string_view to_string(PanoramaStyle style);
PanoramaStyle panorama_style_from_string(std::string_view s);

using Rgb = std::array<float, 3>;

/// Procedural axis-aligned box scene seen from the origin. Walls are indexed
/// 0: z = z_max, 1: x = x_max, 2: z = z_min, 3: x = x_min. A point on a wall is
/// addressed by (a, y) where a is the x coordinate on walls 0/2 and z on walls 1/3.
struct BoxScene {
  struct Stripe {  // vertical, floor to ceiling
    int wall = 0;
    double center = 0.0;
    double width = 0.1;
    Rgb color{};
  };
  struct Band {  // horizontal, spans the whole wall
    int wall = 0;
    double y0 = 0.0;
    double y1 = 0.1;
    Rgb color{};
  };
  struct Panel {  // windows, doors, pictures
    int wall = 0;
    double a0 = 0.0, a1 = 0.1, y0 = 0.0, y1 = 0.1;
    Rgb color{};
  };

  PanoramaStyle style = PanoramaStyle::Room;
  double x_min = -3, x_max = 3, z_min = -3, z_max = 3;
  double floor_y = -1.5, ceiling_y = 1.5;
  std::array<Rgb, 4> wall_colors{};
  Rgb ceiling_color{};
  Rgb floor_color{};
  std::vector<Stripe> stripes;
  std::vector<Band> bands;
  std::vector<Panel> panels;

  /// Radiance along a world ray from the origin.
  Rgb shade(const Eigen::Vector3d& dir) const;
  /// Index of the wall hit by `dir`, or -1 for ceiling/floor.
  int wall_hit(const Eigen::Vector3d& dir) const;
};

BoxScene make_box_scene(std::uint64_t seed, PanoramaStyle style);

/// Deterministic equirectangular rendering of make_box_scene(seed, style),
/// `height` rows by 2 * height columns, one ray per pixel center.
PanoramaImage synth_panorama(std::uint64_t seed, PanoramaStyle style, std::size_t height = 256);

PanoramaImage render_scene(const BoxScene& scene, std::size_t height);

}  // namespace xrot
