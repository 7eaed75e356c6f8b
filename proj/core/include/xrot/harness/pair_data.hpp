#pragma once

#include "xrot/autodiff/tensor.hpp"
#include "xrot/dataset.hpp"
#include "xrot/image.hpp"

#include <span>
#include <string>
#include <vector>

namespace xrot {

/// One training/evaluation example held in memory.
struct PairSample {
  std::string pair_id;
  UnitQuaternion rel_quat;
  OverlapClass overlap = OverlapClass::Large;
  Image image_a;
  Image image_b;
};

/// In-memory pair collection with batching into [B, 3, S, S] tensors.
class PairData {
 public:
  PairData() = default;
  /// All images must be square and share one size; throws ShapeMismatch.
  explicit PairData(std::vector<PairSample> samples);

  /// Reads the crops of one split. Throws IoFailure / CorruptFile.
  static PairData load(const DatasetIndex& index, Split split, unsigned threads = 1);

  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  std::size_t image_size() const { return image_size_; }
  const PairSample& operator[](std::size_t i) const { return samples_.at(i); }

  template <typename T>
  void batch(std::span<const std::size_t> ids, ad::Tensor<T>& image_a, ad::Tensor<T>& image_b) const;
  std::vector<UnitQuaternion> targets(std::span<const std::size_t> ids) const;

 private:
  std::vector<PairSample> samples_;
  std::size_t image_size_ = 0;
};

/// Planar [1, 3, H, W] copy of an image.
template <typename T>
ad::Tensor<T> image_tensor(const Image& image);

}  // namespace xrot
