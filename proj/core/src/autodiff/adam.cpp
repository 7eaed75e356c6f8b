#include "xrot/autodiff/adam.hpp"

#include "xrot/error.hpp"

#include <cmath>
#include <string>

namespace xrot::ad {

void AdamConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) raise(ErrorCode::InvalidConfig, "lr must be a finite value >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) raise(ErrorCode::InvalidConfig, "beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) raise(ErrorCode::InvalidConfig, "beta2 must lie in [0, 1)");
  if (!(eps >= 0.0) || !std::isfinite(eps)) raise(ErrorCode::InvalidConfig, "eps must be a finite value >= 0");
}

template <typename T>
void adam_update(std::span<T> param, std::span<const T> grad, std::span<T> m, std::span<T> v, std::uint64_t t,
                 const AdamConfig& cfg) {
  if (grad.size() != param.size() || m.size() != param.size() || v.size() != param.size()) {
    raise(ErrorCode::ShapeMismatch, "adam_update: parameter has " + std::to_string(param.size()) +
                                        " values but grad/m/v have " + std::to_string(grad.size()) + "/" +
                                        std::to_string(m.size()) + "/" + std::to_string(v.size()));
  }
  if (t == 0) raise(ErrorCode::InvalidArgument, "adam_update: step counter must be >= 1");
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = b1 * m[i] + (1.0 - b1) * g;
    const double vi = b2 * v[i] + (1.0 - b2) * g * g;
    m[i] = static_cast<T>(mi);
    v[i] = static_cast<T>(vi);
    const double update = cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps);
    param[i] = static_cast<T>(param[i] - update);
  }
}

template <typename T>
Adam<T>::Adam(std::vector<Tensor<T>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  for (const auto& p : params_) {
    m_.emplace_back(p.numel(), T(0));
    v_.emplace_back(p.numel(), T(0));
  }
}

template <typename T>
void Adam<T>::set_config(const AdamConfig& cfg) {
  cfg.validate();
  cfg_ = cfg;
}

template <typename T>
void Adam<T>::step() {
  ++t_;
  std::vector<T> zeros;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor<T>& p = params_[i];
    std::span<const T> g = p.grad();
    if (g.empty()) {
      zeros.assign(p.numel(), T(0));
      g = zeros;
    }
    adam_update<T>(p.data(), g, m_[i], v_[i], t_, cfg_);
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
void Adam<T>::set_state(std::uint64_t t, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    raise(ErrorCode::ShapeMismatch, "optimizer state has " + std::to_string(m.size()) + " entries, expected " +
                                        std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (m[i].size() != params_[i].numel() || v[i].size() != params_[i].numel()) {
      raise(ErrorCode::ShapeMismatch, "optimizer state entry " + std::to_string(i) + " does not match " +
                                          shape_str(params_[i].shape()));
    }
  }
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

template void adam_update<float>(std::span<float>, std::span<const float>, std::span<float>, std::span<float>,
                                 std::uint64_t, const AdamConfig&);
template void adam_update<double>(std::span<double>, std::span<const double>, std::span<double>,
                                  std::span<double>, std::uint64_t, const AdamConfig&);
template class Adam<float>;
template class Adam<double>;

}  // namespace xrot::ad
