#include "xrot/harness/trainer.hpp"

#include "xrot/error.hpp"
#include "xrot/model/loss.hpp"
#include "xrot/seeding.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace xrot {

namespace {

constexpr std::uint64_t kShuffleStream = 21;
constexpr std::uint64_t kStepDropoutStream = 22;

double now_ms() {
  using namespace std::chrono;
  return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

}  // namespace

TrainConfig TrainConfig::toy() {
  TrainConfig c;
  c.batch_size = 8;
  return c;
}

void TrainConfig::validate() const {
  adam().validate();
  if (batch_size == 0) raise(ErrorCode::InvalidConfig, "batch_size must be >= 1");
}

template <typename T>
Trainer<T>::Trainer(RotationNet<T>& net, const PairData& data, const TrainConfig& cfg)
    : net_(net), data_(data), cfg_(cfg), adam_(net.parameters(), cfg.adam()), start_ms_(now_ms()) {
  cfg_.validate();
  if (data_.empty()) raise(ErrorCode::EmptySplit, "training set has no pairs");
  if (data_.image_size() != net_.config().image_size) {
    raise(ErrorCode::InvalidConfig, "crops are " + std::to_string(data_.image_size()) + " px but the model expects " +
                                        std::to_string(net_.config().image_size));
  }
}

template <typename T>
std::vector<std::size_t> Trainer<T>::batch_ids(std::uint64_t step) const {
  const std::size_t n = data_.size();
  const std::size_t b = std::min(cfg_.batch_size, n);
  const std::size_t per_epoch = n / b;
  const std::uint64_t epoch = step / per_epoch;
  const std::size_t slot = step % per_epoch;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(cfg_.seed, kShuffleStream, epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return {order.begin() + static_cast<long>(slot * b), order.begin() + static_cast<long>((slot + 1) * b)};
}

template <typename T>
StepRecord Trainer<T>::step() {
  const std::vector<std::size_t> ids = batch_ids(step_);
  ad::Tensor<T> a, b;
  data_.batch<T>(ids, a, b);
  const auto targets = data_.targets(ids);

  ForwardOptions opts;
  opts.train = true;
  opts.dropout_seed = derive_seed(cfg_.seed, kStepDropoutStream, step_);
  adam_.zero_grad();
  auto fail = [&] {
    std::string list;
    for (std::size_t i : ids) list += (list.empty() ? "" : ",") + data_[i].pair_id;
    raise(ErrorCode::NanLoss, "non-finite loss at step " + std::to_string(step_ + 1) + "; batch pairs: " + list);
  };
  ad::Tensor<T> out = net_.forward(a, b, opts);
  for (T v : out.data())
    if (!std::isfinite(v)) fail();
  ad::Tensor<T> loss = rotation_loss<T>(out, targets, net_.config().rotation_mode);
  const double value = loss.item();
  if (!std::isfinite(value)) fail();
  loss.backward();
  adam_.step();
  ++step_;
  return {step_, value, now_ms() - start_ms_};
}

template <typename T>
std::vector<StepRecord> Trainer<T>::run(const std::function<void(const StepRecord&)>& on_step) {
  std::vector<StepRecord> log;
  while (step_ < cfg_.max_steps) {
    log.push_back(step());
    if (on_step) on_step(log.back());
  }
  return log;
}

template <typename T>
void Trainer<T>::restore(std::uint64_t step, std::uint64_t adam_t, std::vector<std::vector<T>> m,
                         std::vector<std::vector<T>> v) {
  adam_.set_state(adam_t, std::move(m), std::move(v));
  step_ = step;
}

template class Trainer<float>;
template class Trainer<double>;

}  // namespace xrot
