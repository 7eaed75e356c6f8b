#include "xrot/harness/pair_data.hpp"

#include "xrot/error.hpp"

#include <thread>

namespace xrot {

namespace {

template <typename T>
void write_planar(const Image& image, T* dst) {
  const std::size_t plane = image.height() * image.width();
  const auto& px = image.pixels();
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t c = 0; c < 3; ++c) dst[c * plane + i] = static_cast<T>(px[3 * i + c]);
  }
}

}  // namespace

PairData::PairData(std::vector<PairSample> samples) : samples_(std::move(samples)) {
  for (const auto& s : samples_) {
    for (const Image* img : {&s.image_a, &s.image_b}) {
      if (img->height() != img->width() || img->height() == 0) {
        raise(ErrorCode::ShapeMismatch, "pair " + s.pair_id + ": crops must be square, got " +
                                            std::to_string(img->height()) + "x" + std::to_string(img->width()));
      }
      if (image_size_ == 0) image_size_ = img->height();
      if (img->height() != image_size_) {
        raise(ErrorCode::ShapeMismatch, "pair " + s.pair_id + ": crop size " + std::to_string(img->height()) +
                                            " differs from " + std::to_string(image_size_));
      }
    }
  }
}

PairData PairData::load(const DatasetIndex& index, Split split, unsigned threads) {
  const auto records = index.select(split);
  std::vector<PairSample> samples(records.size());
  const unsigned workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(records.size())));
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < records.size(); i += workers) {
            const PairRecord& r = *records[i];
            samples[i] = PairSample{r.pair_id, r.quat_rel, r.overlap, read_png(index.root / r.crop_a),
                                    read_png(index.root / r.crop_b)};
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return PairData(std::move(samples));
}

template <typename T>
void PairData::batch(std::span<const std::size_t> ids, ad::Tensor<T>& image_a, ad::Tensor<T>& image_b) const {
  const std::size_t s = image_size_, per = 3 * s * s;
  ad::Buffer<T> a(ids.size() * per), b(ids.size() * per);
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const PairSample& p = samples_.at(ids[k]);
    write_planar(p.image_a, a.data() + k * per);
    write_planar(p.image_b, b.data() + k * per);
  }
  image_a = ad::Tensor<T>::from_data({ids.size(), 3, s, s}, std::move(a));
  image_b = ad::Tensor<T>::from_data({ids.size(), 3, s, s}, std::move(b));
}

std::vector<UnitQuaternion> PairData::targets(std::span<const std::size_t> ids) const {
  std::vector<UnitQuaternion> out;
  out.reserve(ids.size());
  for (std::size_t i : ids) out.push_back(samples_.at(i).rel_quat);
  return out;
}

template <typename T>
ad::Tensor<T> image_tensor(const Image& image) {
  ad::Buffer<T> data(3 * image.height() * image.width());
  write_planar(image, data.data());
  return ad::Tensor<T>::from_data({1, 3, image.height(), image.width()}, std::move(data));
}

template void PairData::batch<float>(std::span<const std::size_t>, ad::Tensor<float>&, ad::Tensor<float>&) const;
template void PairData::batch<double>(std::span<const std::size_t>, ad::Tensor<double>&,
                                      ad::Tensor<double>&) const;
template ad::Tensor<float> image_tensor<float>(const Image&);
template ad::Tensor<double> image_tensor<double>(const Image&);

}  // namespace xrot
