#include "xrot/autodiff/ops.hpp"

#include "xrot/error.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

namespace xrot::ad {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

bool is_trailing(const Shape& outer, const Shape& inner) {
  return inner.size() <= outer.size() && std::equal(inner.rbegin(), inner.rend(), outer.rbegin());
}

std::size_t product(const Shape& s, std::size_t begin, std::size_t end) {
  std::size_t n = 1;
  for (std::size_t i = begin; i < end; ++i) n *= s[i];
  return n;
}

std::size_t normalize_axis(int axis, std::size_t rank, const Shape& shape) {
  const long a = axis < 0 ? static_cast<long>(rank) + axis : axis;
  if (a < 0 || a >= static_cast<long>(rank)) {
    raise(ErrorCode::ShapeMismatch, "axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  return static_cast<std::size_t>(a);
}

template <typename T>
void im2col(const T* x, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t ho, std::size_t wo, T* col) {
  const std::size_t plane = ho * wo;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* dst = col + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const long ih = static_cast<long>(oh * stride + ki) - static_cast<long>(pad);
          T* row = dst + oh * wo;
          if (ih < 0 || ih >= static_cast<long>(h)) {
            std::fill(row, row + wo, T(0));
            continue;
          }
          const T* src = x + (c * h + static_cast<std::size_t>(ih)) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const long iw = static_cast<long>(ow * stride + kj) - static_cast<long>(pad);
            row[ow] = (iw >= 0 && iw < static_cast<long>(w)) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, std::size_t c_in, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
            std::size_t pad, std::size_t ho, std::size_t wo, T* x) {
  const std::size_t plane = ho * wo;
  for (std::size_t c = 0; c < c_in; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* src = col + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const long ih = static_cast<long>(oh * stride + ki) - static_cast<long>(pad);
          if (ih < 0 || ih >= static_cast<long>(h)) continue;
          T* dst = x + (c * h + static_cast<std::size_t>(ih)) * w;
          const T* row = src + oh * wo;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const long iw = static_cast<long>(ow * stride + kj) - static_cast<long>(pad);
            if (iw >= 0 && iw < static_cast<long>(w)) dst[iw] += row[ow];
          }
        }
      }
    }
  }
}

// Copies src (shape `in`) into dst with axes permuted so that output axis i is
// input axis perm[i]. With `accumulate`, adds into dst instead.
template <typename T>
void permute_copy(const T* src, const Shape& in, const std::vector<std::size_t>& perm, T* dst, bool inverse,
                  bool accumulate) {
  const std::size_t rank = in.size();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
  Shape out(rank);
  std::vector<std::size_t> stride_of_out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out[i] = in[perm[i]];
    stride_of_out[i] = in_strides[perm[i]];
  }
  const std::size_t total = numel(in);
  if (total == 0) return;
  std::vector<std::size_t> idx(rank, 0);
  const std::size_t last = rank - 1;
  const std::size_t run = out[last];
  const std::size_t run_stride = stride_of_out[last];
  for (std::size_t o = 0; o < total; o += run) {
    std::size_t offset = 0;
    for (std::size_t i = 0; i < last; ++i) offset += idx[i] * stride_of_out[i];
    for (std::size_t r = 0; r < run; ++r) {
      const std::size_t in_pos = offset + r * run_stride;
      const std::size_t out_pos = o + r;
      // inverse: read from the permuted layout, write to the original one.
      const std::size_t s = inverse ? out_pos : in_pos;
      const std::size_t d = inverse ? in_pos : out_pos;
      if (accumulate) dst[d] += src[s];
      else dst[d] = src[s];
    }
    for (std::size_t i = last; i-- > 0;) {
      if (++idx[i] < out[i]) break;
      idx[i] = 0;
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (!is_trailing(a.shape(), b.shape())) shape_error("add", a.shape(), b.shape());
  const std::size_t n = a.numel();
  const std::size_t m = b.numel();
  Buffer<T> out(n);
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < n; i += m) {
    for (std::size_t j = 0; j < m; ++j) out[i + j] = ad[i + j] + bd[j];
  }
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [a, b, n, m](std::span<const T> g) {
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      for (std::size_t i = 0; i < n; i += m) {
        for (std::size_t j = 0; j < m; ++j) gb[j] += g[i + j];
      }
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) shape_error("mul", a.shape(), b.shape());
  const std::size_t n = a.numel();
  Buffer<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i] * b.data()[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {a, b}, [a, b, n](std::span<const T> g) {
    if (a.requires_grad()) {
      auto ga = a.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * b.data()[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * a.data()[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  Buffer<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v *= factor;
  return Tensor<T>::make_result(a.shape(), std::move(out), {a}, [a, factor](std::span<const T> g) {
    auto ga = a.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

namespace {
thread_local bool g_trace_on = false;
thread_local std::uint64_t g_trace_hash = 0;
}  // namespace

void set_activation_trace(bool on) { g_trace_on = on; }

std::uint64_t take_activation_trace() { return std::exchange(g_trace_hash, 0); }

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Buffer<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] <= T(0) ? T(0) : xd[i];  // NaN passes through
  if (g_trace_on) {
    std::uint64_t h = g_trace_hash;
    for (std::size_t i = 0; i < out.size(); ++i) h = (h ^ static_cast<std::uint64_t>(xd[i] > T(0))) * 0x100000001b3ULL;
    g_trace_hash = h ^ out.size();
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [x](std::span<const T> g) {
    auto gx = x.grad_buffer();
    auto xd = x.data();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xd[i] > T(0)) gx[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = T(0);
  for (T v : x.data()) s += v;
  return Tensor<T>::make_result(Shape{1}, {s}, {x}, [x](std::span<const T> g) {
    for (T& v : x.grad_buffer()) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const T n = static_cast<T>(x.numel());
  T s = T(0);
  for (T v : x.data()) s += v;
  return Tensor<T>::make_result(Shape{1}, {s / n}, {x}, [x, n](std::span<const T> g) {
    for (T& v : x.grad_buffer()) v += g[0] / n;
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool ta, bool tb) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
    shape_error("matmul", sa, sb);
  }
  const std::size_t rank = sa.size();
  const std::size_t ra = sa[rank - 2], ca = sa[rank - 1];
  const std::size_t rb = sb[rank - 2], cb = sb[rank - 1];
  const std::size_t m = ta ? ca : ra;
  const std::size_t k = ta ? ra : ca;
  const std::size_t kb = tb ? cb : rb;
  const std::size_t n = tb ? rb : cb;
  if (k != kb) shape_error("matmul", sa, sb);
  const std::size_t batch = product(sa, 0, rank - 2);

  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);
  Buffer<T> out(batch * m * n);
  for (std::size_t i = 0; i < batch; ++i) {
    ConstMatMap<T> A(a.data().data() + i * ra * ca, static_cast<long>(ra), static_cast<long>(ca));
    ConstMatMap<T> B(b.data().data() + i * rb * cb, static_cast<long>(rb), static_cast<long>(cb));
    MatMap<T> C(out.data() + i * m * n, static_cast<long>(m), static_cast<long>(n));
    if (!ta && !tb) C.noalias() = A * B;
    else if (ta && !tb) C.noalias() = A.transpose() * B;
    else if (!ta && tb) C.noalias() = A * B.transpose();
    else C.noalias() = A.transpose() * B.transpose();
  }

  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {a, b},
                                [a, b, ta, tb, batch, ra, ca, rb, cb, m, n](std::span<const T> g) {
    for (std::size_t i = 0; i < batch; ++i) {
      ConstMatMap<T> A(a.data().data() + i * ra * ca, static_cast<long>(ra), static_cast<long>(ca));
      ConstMatMap<T> B(b.data().data() + i * rb * cb, static_cast<long>(rb), static_cast<long>(cb));
      ConstMatMap<T> G(g.data() + i * m * n, static_cast<long>(m), static_cast<long>(n));
      if (a.requires_grad()) {
        MatMap<T> GA(a.grad_buffer().data() + i * ra * ca, static_cast<long>(ra), static_cast<long>(ca));
        if (!ta && !tb) GA.noalias() += G * B.transpose();
        else if (ta && !tb) GA.noalias() += B * G.transpose();
        else if (!ta && tb) GA.noalias() += G * B;
        else GA.noalias() += B.transpose() * G.transpose();
      }
      if (b.requires_grad()) {
        MatMap<T> GB(b.grad_buffer().data() + i * rb * cb, static_cast<long>(rb), static_cast<long>(cb));
        if (!ta && !tb) GB.noalias() += A.transpose() * G;
        else if (ta && !tb) GB.noalias() += A * G;
        else if (!ta && tb) GB.noalias() += G.transpose() * A;
        else GB.noalias() += G.transpose() * A.transpose();
      }
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.empty() || sw.size() != 2 || sw[1] != sx.back()) shape_error("linear", sx, sw);
  const std::size_t in = sw[1];
  const std::size_t outf = sw[0];
  if (bias.defined() && (bias.shape() != Shape{outf})) shape_error("linear bias", sw, bias.shape());
  const std::size_t rows = x.numel() / in;

  Shape out_shape = sx;
  out_shape.back() = outf;
  Buffer<T> out(rows * outf);
  ConstMatMap<T> X(x.data().data(), static_cast<long>(rows), static_cast<long>(in));
  ConstMatMap<T> W(weight.data().data(), static_cast<long>(outf), static_cast<long>(in));
  MatMap<T> Y(out.data(), static_cast<long>(rows), static_cast<long>(outf));
  Y.noalias() = X * W.transpose();
  if (bias.defined()) {
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bv(bias.data().data(), static_cast<long>(outf));
    Y.rowwise() += bv;
  }

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), std::move(inputs),
                                [x, weight, bias, rows, in, outf](std::span<const T> g) {
    ConstMatMap<T> G(g.data(), static_cast<long>(rows), static_cast<long>(outf));
    ConstMatMap<T> W(weight.data().data(), static_cast<long>(outf), static_cast<long>(in));
    ConstMatMap<T> X(x.data().data(), static_cast<long>(rows), static_cast<long>(in));
    if (x.requires_grad()) {
      MatMap<T> GX(x.grad_buffer().data(), static_cast<long>(rows), static_cast<long>(in));
      GX.noalias() += G * W;
    }
    if (weight.requires_grad()) {
      MatMap<T> GW(weight.grad_buffer().data(), static_cast<long>(outf), static_cast<long>(in));
      GW.noalias() += G.transpose() * X;
    }
    if (bias.defined() && bias.requires_grad()) {
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(bias.grad_buffer().data(), static_cast<long>(outf));
      gb += G.colwise().sum();
    }
  });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, Conv2dParams params) {
  const Shape& sx = x.shape();
  const Shape& sw = weight.shape();
  if (sx.size() != 4 || sw.size() != 4 || sw[1] != sx[1] || sw[2] != sw[3] || params.stride == 0) {
    shape_error("conv2d", sx, sw);
  }
  const std::size_t batch = sx[0], c_in = sx[1], h = sx[2], w = sx[3];
  const std::size_t c_out = sw[0], k = sw[2];
  const std::size_t s = params.stride, p = params.padding;
  if (h + 2 * p < k || w + 2 * p < k) shape_error("conv2d", sx, sw);
  if (bias.defined() && (bias.shape() != Shape{c_out})) shape_error("conv2d bias", sw, bias.shape());
  const std::size_t ho = (h + 2 * p - k) / s + 1;
  const std::size_t wo = (w + 2 * p - k) / s + 1;
  const std::size_t plane = ho * wo;
  const std::size_t patch = c_in * k * k;
  const bool pointwise = k == 1 && s == 1 && p == 0;

  Buffer<T> out(batch * c_out * plane);
  Buffer<T> col(pointwise ? 0 : patch * plane);
  ConstMatMap<T> Wm(weight.data().data(), static_cast<long>(c_out), static_cast<long>(patch));
  for (std::size_t n = 0; n < batch; ++n) {
    const T* xn = x.data().data() + n * c_in * h * w;
    if (!pointwise) im2col(xn, c_in, h, w, k, s, p, ho, wo, col.data());
    ConstMatMap<T> Col(pointwise ? xn : col.data(), static_cast<long>(patch), static_cast<long>(plane));
    MatMap<T> O(out.data() + n * c_out * plane, static_cast<long>(c_out), static_cast<long>(plane));
    O.noalias() = Wm * Col;
    if (bias.defined()) {
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(bias.data().data(), static_cast<long>(c_out));
      O.colwise() += bv;
    }
  }

  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return Tensor<T>::make_result(
      Shape{batch, c_out, ho, wo}, std::move(out), std::move(inputs),
      [x, weight, bias, batch, c_in, h, w, c_out, k, s, p, ho, wo, plane, patch, pointwise](std::span<const T> g) {
        Buffer<T> col(pointwise ? 0 : patch * plane);
        Buffer<T> dcol(pointwise ? 0 : patch * plane);
        ConstMatMap<T> Wm(weight.data().data(), static_cast<long>(c_out), static_cast<long>(patch));
        for (std::size_t n = 0; n < batch; ++n) {
          ConstMatMap<T> G(g.data() + n * c_out * plane, static_cast<long>(c_out), static_cast<long>(plane));
          const T* xn = x.data().data() + n * c_in * h * w;
          if (weight.requires_grad()) {
            if (!pointwise) im2col(xn, c_in, h, w, k, s, p, ho, wo, col.data());
            ConstMatMap<T> Col(pointwise ? xn : col.data(), static_cast<long>(patch), static_cast<long>(plane));
            MatMap<T> GW(weight.grad_buffer().data(), static_cast<long>(c_out), static_cast<long>(patch));
            GW.noalias() += G * Col.transpose();
          }
          if (bias.defined() && bias.requires_grad()) {
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gb(bias.grad_buffer().data(), static_cast<long>(c_out));
            gb += G.rowwise().sum();
          }
          if (x.requires_grad()) {
            T* gx = x.grad_buffer().data() + n * c_in * h * w;
            if (pointwise) {
              MatMap<T> GX(gx, static_cast<long>(patch), static_cast<long>(plane));
              GX.noalias() += Wm.transpose() * G;
            } else {
              MatMap<T> DC(dcol.data(), static_cast<long>(patch), static_cast<long>(plane));
              DC.noalias() = Wm.transpose() * G;
              col2im(dcol.data(), c_in, h, w, k, s, p, ho, wo, gx);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t k) {
  const Shape& sx = x.shape();
  if (sx.size() != 4 || k == 0 || sx[2] % k != 0 || sx[3] % k != 0) {
    shape_error("avg_pool2d", sx, Shape{k, k});
  }
  const std::size_t planes = sx[0] * sx[1], h = sx[2], w = sx[3];
  const std::size_t ho = h / k, wo = w / k;
  const T inv = T(1) / static_cast<T>(k * k);
  Buffer<T> out(planes * ho * wo, T(0));
  auto xd = x.data();
  for (std::size_t pl = 0; pl < planes; ++pl) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        out[(pl * ho + i / k) * wo + j / k] += xd[(pl * h + i) * w + j];
      }
    }
  }
  for (T& v : out) v *= inv;
  return Tensor<T>::make_result(Shape{sx[0], sx[1], ho, wo}, std::move(out), {x},
                                [x, planes, h, w, ho, wo, k, inv](std::span<const T> g) {
    auto gx = x.grad_buffer();
    for (std::size_t pl = 0; pl < planes; ++pl) {
      for (std::size_t i = 0; i < h; ++i) {
        for (std::size_t j = 0; j < w; ++j) {
          gx[(pl * h + i) * w + j] += g[(pl * ho + i / k) * wo + j / k] * inv;
        }
      }
    }
  });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, bool train, T momentum, T eps) {
  const Shape& sx = x.shape();
  if (sx.size() < 2) shape_error("batch_norm", sx, gamma.shape());
  const std::size_t batch = sx[0], channels = sx[1];
  const std::size_t spatial = product(sx, 2, sx.size());
  const Shape cshape{channels};
  if (gamma.shape() != cshape || beta.shape() != cshape) shape_error("batch_norm", sx, gamma.shape());
  if (running_mean.shape() != cshape || running_var.shape() != cshape) {
    shape_error("batch_norm running stats", sx, running_mean.shape());
  }
  const std::size_t count = batch * spatial;
  if (train && count < 2) {
    raise(ErrorCode::ShapeMismatch, "batch_norm in train mode needs more than one value per channel, got shape " +
                                        shape_str(sx) + "; use eval mode");
  }

  auto xd = x.data();
  Buffer<T> xhat(x.numel());
  Buffer<T> invstd(channels);
  Buffer<T> out(x.numel());
  for (std::size_t c = 0; c < channels; ++c) {
    double mu, var;
    if (train) {
      double acc = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = xd.data() + (n * channels + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) acc += p[s];
      }
      mu = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t n = 0; n < batch; ++n) {
        const T* p = xd.data() + (n * channels + c) * spatial;
        for (std::size_t s = 0; s < spatial; ++s) sq += (p[s] - mu) * (p[s] - mu);
      }
      var = sq / static_cast<double>(count);
      const double unbiased = sq / static_cast<double>(count - 1);
      T& rm = running_mean.storage()[c];
      T& rv = running_var.storage()[c];
      rm = static_cast<T>((1.0 - momentum) * rm + momentum * mu);
      rv = static_cast<T>((1.0 - momentum) * rv + momentum * unbiased);
    } else {
      mu = running_mean.data()[c];
      var = running_var.data()[c];
    }
    const T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    invstd[c] = is;
    const T gm = gamma.data()[c], bt = beta.data()[c];
    const T mu_t = static_cast<T>(mu);
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + c) * spatial;
      for (std::size_t s = 0; s < spatial; ++s) {
        const T xh = (xd[base + s] - mu_t) * is;
        xhat[base + s] = xh;
        out[base + s] = gm * xh + bt;
      }
    }
  }

  return Tensor<T>::make_result(
      sx, std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), invstd = std::move(invstd), batch, channels, spatial, count,
       train](std::span<const T> g) {
        for (std::size_t c = 0; c < channels; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t n = 0; n < batch; ++n) {
            const std::size_t base = (n * channels + c) * spatial;
            for (std::size_t s = 0; s < spatial; ++s) {
              sum_g += g[base + s];
              sum_gx += g[base + s] * xhat[base + s];
            }
          }
          if (gamma.requires_grad()) gamma.grad_buffer()[c] += static_cast<T>(sum_gx);
          if (beta.requires_grad()) beta.grad_buffer()[c] += static_cast<T>(sum_g);
          if (!x.requires_grad()) continue;
          auto gx = x.grad_buffer();
          const T gm = gamma.data()[c];
          if (train) {
            const T k = gm * invstd[c] / static_cast<T>(count);
            const T mg = static_cast<T>(sum_g);
            const T mgx = static_cast<T>(sum_gx);
            const T cnt = static_cast<T>(count);
            for (std::size_t n = 0; n < batch; ++n) {
              const std::size_t base = (n * channels + c) * spatial;
              for (std::size_t s = 0; s < spatial; ++s) {
                gx[base + s] += k * (cnt * g[base + s] - mg - xhat[base + s] * mgx);
              }
            }
          } else {
            const T k = gm * invstd[c];
            for (std::size_t n = 0; n < batch; ++n) {
              const std::size_t base = (n * channels + c) * spatial;
              for (std::size_t s = 0; s < spatial; ++s) gx[base + s] += k * g[base + s];
            }
          }
        }
      });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const Shape& sx = x.shape();
  if (sx.empty() || gamma.shape() != Shape{sx.back()} || beta.shape() != Shape{sx.back()}) {
    shape_error("layer_norm", sx, gamma.shape());
  }
  const std::size_t d = sx.back();
  const std::size_t rows = x.numel() / d;
  auto xd = x.data();
  Buffer<T> xhat(x.numel());
  Buffer<T> invstd(rows);
  Buffer<T> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* p = xd.data() + r * d;
    double acc = 0.0;
    for (std::size_t i = 0; i < d; ++i) acc += p[i];
    const double mu = acc / static_cast<double>(d);
    double sq = 0.0;
    for (std::size_t i = 0; i < d; ++i) sq += (p[i] - mu) * (p[i] - mu);
    const T is = static_cast<T>(1.0 / std::sqrt(sq / static_cast<double>(d) + static_cast<double>(eps)));
    invstd[r] = is;
    for (std::size_t i = 0; i < d; ++i) {
      const T xh = (p[i] - static_cast<T>(mu)) * is;
      xhat[r * d + i] = xh;
      out[r * d + i] = gamma.data()[i] * xh + beta.data()[i];
    }
  }
  return Tensor<T>::make_result(
      sx, std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), invstd = std::move(invstd), rows, d](std::span<const T> g) {
        const bool gg = gamma.requires_grad(), gb = beta.requires_grad(), gxr = x.requires_grad();
        std::span<T> dgamma = gg ? gamma.grad_buffer() : std::span<T>();
        std::span<T> dbeta = gb ? beta.grad_buffer() : std::span<T>();
        std::span<T> gx = gxr ? x.grad_buffer() : std::span<T>();
        auto gm = gamma.data();
        for (std::size_t r = 0; r < rows; ++r) {
          const T* gr = g.data() + r * d;
          const T* xh = xhat.data() + r * d;
          double sum_dxh = 0.0, sum_dxh_xh = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            if (gg) dgamma[i] += gr[i] * xh[i];
            if (gb) dbeta[i] += gr[i];
            const T dxh = gr[i] * gm[i];
            sum_dxh += dxh;
            sum_dxh_xh += dxh * xh[i];
          }
          if (!gxr) continue;
          const T k = invstd[r] / static_cast<T>(d);
          const T dd = static_cast<T>(d);
          for (std::size_t i = 0; i < d; ++i) {
            const T dxh = gr[i] * gm[i];
            gx[r * d + i] += k * (dd * dxh - static_cast<T>(sum_dxh) - xh[i] * static_cast<T>(sum_dxh_xh));
          }
        }
      });
}

template <typename T>
Tensor<T> masked_softmax(const Tensor<T>& x, const Tensor<T>& mask, int axis) {
  const Shape& sx = x.shape();
  if (sx.empty()) shape_error("masked_softmax", sx, Shape{});
  if (mask.defined() && !is_trailing(sx, mask.shape())) shape_error("masked_softmax", sx, mask.shape());
  const std::size_t ax = normalize_axis(axis, sx.size(), sx);
  const std::size_t outer = product(sx, 0, ax);
  const std::size_t len = sx[ax];
  const std::size_t inner = product(sx, ax + 1, sx.size());
  const std::size_t mask_n = mask.defined() ? mask.numel() : 0;
  auto xd = x.data();
  const T* md = mask.defined() ? mask.data().data() : nullptr;

  Buffer<T> out(x.numel());
  Buffer<T> row(len);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t l = 0; l < len; ++l) {
        const std::size_t idx = base + l * inner;
        const T z = md ? xd[idx] + md[idx % mask_n] : xd[idx];
        row[l] = z;
        mx = std::max(mx, z);
      }
      if (mx == -std::numeric_limits<T>::infinity()) {
        for (std::size_t l = 0; l < len; ++l) out[base + l * inner] = std::numeric_limits<T>::quiet_NaN();
        continue;
      }
      T total = T(0);
      for (std::size_t l = 0; l < len; ++l) {
        row[l] = std::exp(row[l] - mx);
        total += row[l];
      }
      const T inv = T(1) / total;
      for (std::size_t l = 0; l < len; ++l) out[base + l * inner] = row[l] * inv;
    }
  }

  Buffer<T> y = out;
  return Tensor<T>::make_result(sx, std::move(out), {x},
                                [x, y = std::move(y), outer, len, inner](std::span<const T> g) {
    auto gx = x.grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = T(0);
        for (std::size_t l = 0; l < len; ++l) dot += g[base + l * inner] * y[base + l * inner];
        for (std::size_t l = 0; l < len; ++l) {
          const std::size_t idx = base + l * inner;
          gx[idx] += y[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T p, bool train, std::mt19937_64& rng) {
  if (!(p >= T(0) && p < T(1))) {
    raise(ErrorCode::InvalidArgument, "dropout probability must lie in [0, 1)");
  }
  if (!train || p == T(0)) return x;
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const T keep_scale = T(1) / (T(1) - p);
  Buffer<T> keep(x.numel());
  Buffer<T> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < keep.size(); ++i) {
    keep[i] = uni(rng) < static_cast<double>(p) ? T(0) : keep_scale;
    out[i] = xd[i] * keep[i];
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {x}, [x, keep = std::move(keep)](std::span<const T> g) {
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * keep[i];
  });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
  if (parts.empty()) raise(ErrorCode::ShapeMismatch, "concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) shape_error("concat", first, Shape{axis});
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : parts) {
    const Shape& s = t.shape();
    if (s.size() != first.size()) shape_error("concat", first, s);
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) shape_error("concat", first, s);
    }
    out_shape[axis] += s[axis];
  }
  const std::size_t outer = product(first, 0, axis);
  const std::size_t inner = product(first, axis + 1, first.size());
  const std::size_t out_row = out_shape[axis] * inner;

  Buffer<T> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& t : parts) {
    offsets.push_back(off);
    const std::size_t part_row = t.shape()[axis] * inner;
    auto td = t.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(td.data() + o * part_row, part_row, out.data() + o * out_row + off);
    }
    off += part_row;
  }
  std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), inputs,
                                [inputs, offsets, outer, inner, out_row, axis](std::span<const T> g) {
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!inputs[i].requires_grad()) continue;
      const std::size_t part_row = inputs[i].shape()[axis] * inner;
      auto gp = inputs[i].grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        const T* src = g.data() + o * out_row + offsets[i];
        T* dst = gp.data() + o * part_row;
        for (std::size_t j = 0; j < part_row; ++j) dst[j] += src[j];
      }
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel()) shape_error("reshape", x.shape(), shape);
  Buffer<T> out(x.data().begin(), x.data().end());
  return Tensor<T>::make_result(std::move(shape), std::move(out), {x}, [x](std::span<const T> g) {
    auto gx = x.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& perm) {
  const Shape& sx = x.shape();
  std::vector<std::size_t> check = perm;
  std::sort(check.begin(), check.end());
  std::vector<std::size_t> iota(sx.size());
  std::iota(iota.begin(), iota.end(), std::size_t{0});
  if (check != iota) shape_error("permute", sx, Shape(perm.begin(), perm.end()));
  Shape out_shape(sx.size());
  for (std::size_t i = 0; i < sx.size(); ++i) out_shape[i] = sx[perm[i]];
  Buffer<T> out(x.numel());
  permute_copy(x.data().data(), sx, perm, out.data(), false, false);
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {x}, [x, perm](std::span<const T> g) {
    permute_copy(g.data(), x.shape(), perm, x.grad_buffer().data(), true, true);
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, std::size_t axis0, std::size_t axis1) {
  std::vector<std::size_t> perm(x.dim());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (axis0 >= perm.size() || axis1 >= perm.size()) shape_error("transpose", x.shape(), Shape{axis0, axis1});
  std::swap(perm[axis0], perm[axis1]);
  return permute(x, perm);
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& sx = x.shape();
  if (axis >= sx.size() || start + length > sx[axis]) shape_error("slice", sx, Shape{axis, start, length});
  const std::size_t outer = product(sx, 0, axis);
  const std::size_t inner = product(sx, axis + 1, sx.size());
  const std::size_t in_row = sx[axis] * inner;
  const std::size_t out_row = length * inner;
  Shape out_shape = sx;
  out_shape[axis] = length;
  Buffer<T> out(outer * out_row);
  auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xd.data() + o * in_row + start * inner, out_row, out.data() + o * out_row);
  }
  return Tensor<T>::make_result(std::move(out_shape), std::move(out), {x},
                                [x, outer, inner, in_row, out_row, start](std::span<const T> g) {
    auto gx = x.grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      T* dst = gx.data() + o * in_row + start * inner;
      const T* src = g.data() + o * out_row;
      for (std::size_t j = 0; j < out_row; ++j) dst[j] += src[j];
    }
  });
}

#define XROT_INSTANTIATE_OPS(T)                                                                              \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                \
  template Tensor<T> scale(const Tensor<T>&, T);                                                             \
  template Tensor<T> relu(const Tensor<T>&);                                                                 \
  template Tensor<T> sum(const Tensor<T>&);                                                                  \
  template Tensor<T> mean(const Tensor<T>&);                                                                 \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool, bool);                                 \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                           \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dParams);             \
  template Tensor<T> avg_pool2d(const Tensor<T>&, std::size_t);                                              \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tensor<T>&, Tensor<T>&, \
                                bool, T, T);                                                                 \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                    \
  template Tensor<T> masked_softmax(const Tensor<T>&, const Tensor<T>&, int);                                \
  template Tensor<T> dropout(const Tensor<T>&, T, bool, std::mt19937_64&);                                   \
  template Tensor<T> concat(std::span<const Tensor<T>>, std::size_t);                                        \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                       \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                             \
  template Tensor<T> transpose(const Tensor<T>&, std::size_t, std::size_t);                                  \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);

XROT_INSTANTIATE_OPS(float)
XROT_INSTANTIATE_OPS(double)

}  // namespace xrot::ad
