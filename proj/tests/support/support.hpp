#pragma once

#include "xrot/autodiff/ops.hpp"
#include "xrot/dataset.hpp"
#include "xrot/geometry.hpp"
#include "xrot/harness/pair_data.hpp"
#include "xrot/panorama.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace xrot::test {

inline UnitQuaternion random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const double w = n(rng), x = n(rng), y = n(rng), z = n(rng);
    if (w * w + x * x + y * y + z * z > 1e-6) return UnitQuaternion(w, x, y, z);
  }
}

inline RotationMatrix random_rotation(std::mt19937_64& rng) { return quat_to_matrix(random_quat(rng)); }

// Plain Hamilton algebra, kept separate from the library's implementation.
struct Quat {
  double w, x, y, z;
};

inline Quat qmul(const Quat& a, const Quat& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z, a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x, a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

inline Quat qconj(const Quat& q) { return {q.w, -q.x, -q.y, -q.z}; }

inline Quat axis_angle(double ax, double ay, double az, double angle_rad) {
  const double s = std::sin(angle_rad / 2);
  return {std::cos(angle_rad / 2), ax * s, ay * s, az * s};
}

/// q v q*
inline Eigen::Vector3d qrotate(const Quat& q, const Eigen::Vector3d& v) {
  const Quat r = qmul(qmul(q, Quat{0, v.x(), v.y(), v.z()}), qconj(q));
  return {r.x, r.y, r.z};
}

/// Rotation angle between two unit quaternions, in degrees, via the
/// relative quaternion's half-angle.
inline double quat_oracle_angle_deg(const Quat& a, const Quat& b) {
  const Quat d = qmul(qconj(a), b);
  const double s = std::sqrt(d.x * d.x + d.y * d.y + d.z * d.z);
  return 2.0 * std::atan2(s, std::abs(d.w)) * 180.0 / M_PI;
}

inline Quat to_quat(const UnitQuaternion& q) { return {q.w(), q.x(), q.y(), q.z()}; }

inline double quat_distance(const UnitQuaternion& a, const UnitQuaternion& b) {
  const auto ca = a.coeffs(), cb = b.coeffs();
  double plus = 0, minus = 0;
  for (int i = 0; i < 4; ++i) {
    plus = std::max(plus, std::abs(ca[i] - cb[i]));
    minus = std::max(minus, std::abs(ca[i] + cb[i]));
  }
  return std::min(plus, minus);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("xrot_" + tag + "_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline ad::Tensor<double> random_tensor(const ad::Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                                        double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  ad::Buffer<double> v(ad::numel(shape));
  for (auto& x : v) x = u(rng);
  return ad::Tensor<double>::from_data(shape, std::move(v), requires_grad);
}

/// Values with |x| in [0.1, 1] and random sign, keeping finite differences
/// clear of the ReLU kink.
inline ad::Tensor<double> kink_free_tensor(const ad::Shape& shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  ad::Buffer<double> v(ad::numel(shape));
  for (auto& x : v) x = sign(rng) ? u(rng) : -u(rng);
  return ad::Tensor<double>::from_data(shape, std::move(v), true);
}

/// Scalar probe sum(out * w) with a fixed random w, so that every output
/// element contributes with its own weight.
inline ad::Tensor<double> probe(const ad::Tensor<double>& out, std::uint64_t seed = 99) {
  std::mt19937_64 rng(seed);
  const auto w = random_tensor(out.shape(), rng, -1.0, 1.0, false);
  return ad::sum(ad::mul(out, w));
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;      // stencils that crossed a ReLU kink
  double worst_analytic = 0.0;  // the pair behind max_rel_error
  double worst_numeric = 0.0;
};

/// Compares analytic gradients of the scalar `f()` with central differences
/// for every element of `inputs` (or `max_per_input` sampled elements).
/// Relative error is |a - n| / max(|a|, |n|, floor). An element whose
/// stencil x +- h changes the sign of any ReLU input is not differentiable
/// there; it is skipped and another one is drawn.
inline GradCheck check_gradients(const std::function<ad::Tensor<double>()>& f,
                                  std::vector<ad::Tensor<double>> inputs, double h = 1e-6,
                                  std::size_t max_per_input = 0, std::uint64_t sample_seed = 1,
                                  double floor = 1e-2) {
  for (auto& t : inputs) t.zero_grad();
  ad::set_activation_trace(true);
  ad::take_activation_trace();
  f().backward();
  const std::uint64_t pattern = ad::take_activation_trace();
  std::vector<std::vector<double>> analytic;
  for (auto& t : inputs) {
    const auto g = t.grad();
    analytic.emplace_back(t.numel(), 0.0);
    std::copy(g.begin(), g.end(), analytic.back().begin());
  }

  GradCheck out;
  std::mt19937_64 rng(sample_seed);
  ad::NoGradGuard guard;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto data = inputs[k].data();
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::size_t want = idx.size();
    if (max_per_input > 0 && idx.size() > max_per_input) {
      std::shuffle(idx.begin(), idx.end(), rng);
      want = max_per_input;
    }
    std::size_t done = 0, tried = 0;
    for (std::size_t i : idx) {
      if (done == want || tried++ == 20 * want) break;
      const double saved = data[i];
      data[i] = saved + h;
      const double up = f().item();
      const std::uint64_t up_pattern = ad::take_activation_trace();
      data[i] = saved - h;
      const double down = f().item();
      const std::uint64_t down_pattern = ad::take_activation_trace();
      data[i] = saved;
      if (up_pattern != pattern || down_pattern != pattern) {
        ++out.skipped;
        continue;
      }
      const double numeric = (up - down) / (2 * h);
      const double a = analytic[k][i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst_analytic = a;
        out.worst_numeric = numeric;
      }
      ++out.checked;
      ++done;
    }
  }
  ad::set_activation_trace(false);
  return out;
}

/// In-memory pairs rendered from small synthetic panoramas.
inline PairData make_pairs(std::size_t n, std::uint64_t seed, DatasetSpec spec = {}) {
  spec.panorama_height = std::min<std::size_t>(spec.panorama_height, 128);
  std::mt19937_64 rng(seed);
  std::vector<PanoramaImage> panos;
  for (std::uint64_t p = 0; p < 4; ++p) panos.push_back(synth_panorama(seed * 31 + p, spec.style, spec.panorama_height));
  std::vector<PairSample> samples;
  for (std::size_t i = 0; i < n; ++i) {
    const ImagePair pair = sample_pair(panos[i % panos.size()], rng, spec);
    samples.push_back({"pair_" + std::to_string(i), pair.rel_quat, pair.overlap, pair.crop1.pixels,
                       pair.crop2.pixels});
  }
  return PairData(std::move(samples));
}

}  // namespace xrot::test
