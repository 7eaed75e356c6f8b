#pragma once

#include "xrot/autodiff/adam.hpp"
#include "xrot/harness/pair_data.hpp"
#include "xrot/model/network.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace xrot {

struct TrainConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-10;
  std::size_t batch_size = 20;
  std::size_t max_steps = 1000;
  std::uint64_t seed = 0;
  std::size_t eval_interval = 0;        // 0 disables periodic evaluation
  std::size_t checkpoint_interval = 0;  // 0 saves only the final state
  std::string checkpoint_dir = "checkpoints";

  /// Same optimizer settings with batch size 8.
  static TrainConfig toy();

  ad::AdamConfig adam() const { return {lr, beta1, beta2, eps}; }
  /// Throws InvalidConfig.
  void validate() const;

  bool operator==(const TrainConfig&) const = default;
};

struct StepRecord {
  std::uint64_t step = 0;  // 1-based index of the completed step
  double loss = 0.0;
  double wall_ms = 0.0;    // elapsed since the trainer was created
};

/// Mini-batch Adam training. The batch and dropout masks of step s depend
/// only on (seed, s), so a run restored at step s continues exactly as an
/// unbroken one would.
template <typename T>
class Trainer {
 public:
  Trainer(RotationNet<T>& net, const PairData& data, const TrainConfig& cfg);

  /// One optimization step. Throws NanLoss naming the batch's pair ids.
  StepRecord step();
  /// Runs until `max_steps` steps are done in total.
  std::vector<StepRecord> run(const std::function<void(const StepRecord&)>& on_step = {});

  /// Pair indices used by the 0-based step `step`.
  std::vector<std::size_t> batch_ids(std::uint64_t step) const;

  std::uint64_t steps_done() const { return step_; }
  /// Resumes from a saved step counter and optimizer state.
  void restore(std::uint64_t step, std::uint64_t adam_t, std::vector<std::vector<T>> m,
               std::vector<std::vector<T>> v);

  ad::Adam<T>& optimizer() { return adam_; }
  const TrainConfig& config() const { return cfg_; }

 private:
  RotationNet<T>& net_;
  const PairData& data_;
  TrainConfig cfg_;
  ad::Adam<T> adam_;
  std::uint64_t step_ = 0;
  double start_ms_ = 0.0;
};

extern template class Trainer<float>;
extern template class Trainer<double>;

}  // namespace xrot
