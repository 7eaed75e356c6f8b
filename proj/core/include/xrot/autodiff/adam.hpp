#pragma once

#include "xrot/autodiff/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace xrot::ad {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-10;

  /// Throws InvalidConfig unless lr >= 0 and both betas lie in [0, 1).
  void validate() const;
};

/// One bias-corrected Adam update at step t (t >= 1, already incremented).
/// All four spans must have equal length; throws ShapeMismatch otherwise.
template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t t,
                 const AdamConfig& cfg);

/// Adam over a fixed list of parameter tensors. Parameters without an
/// accumulated gradient are treated as having a zero gradient.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Tensor<T>> params, AdamConfig cfg);

  void step();
  void zero_grad();

  const AdamConfig& config() const { return cfg_; }
  void set_config(const AdamConfig& cfg);

  std::uint64_t t() const { return t_; }
  std::size_t size() const { return params_.size(); }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

  /// Restores optimizer state; moment lengths must match the parameters.
  void set_state(std::uint64_t t, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v);

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
  std::uint64_t t_ = 0;
  AdamConfig cfg_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace xrot::ad
