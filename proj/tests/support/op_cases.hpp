#pragma once

#include "support.hpp"

#include <array>
#include <limits>
#include <ostream>
#include <string>
#include <utility>

namespace xrot::test {

/// Receives one finite-difference result per checked op variant.
using GradSink = std::function<void(const std::string& what, const GradCheck& result)>;

struct OpCase {
  std::string name;
  std::function<void(int trials, const GradSink& sink)> run;
};

inline void PrintTo(const OpCase& c, std::ostream* os) { *os << c.name; }

/// Randomized gradient checks of every autodiff op on small double tensors.
/// Each op output is reduced with a fixed random projection before checking.
inline std::vector<OpCase> op_gradient_cases() {
  using TD = ad::Tensor<double>;
  using ad::Shape;
  auto pick = [](std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  auto check = [](const GradSink& sink, const std::string& what, const std::function<TD()>& f,
                  std::vector<TD> inputs) {
    sink(what, check_gradients([&] { return probe(f()); }, std::move(inputs)));
  };

  std::vector<OpCase> cases;
  cases.push_back({"add", [=](int trials, const GradSink& sink) {
                     std::mt19937_64 rng(10);
                     for (int t = 0; t < trials; ++t) {
                       const Shape s{pick(rng, 1, 3), pick(rng, 1, 4), pick(rng, 1, 5)};
                       auto a = random_tensor(s, rng), b = random_tensor(s, rng);
                       auto bias = random_tensor({s[2]}, rng);
                       check(sink, "add", [&] { return ad::add(a, b); }, {a, b});
                       check(sink, "add broadcast", [&] { return ad::add(a, bias); }, {a, bias});
                     }
                   }});
  cases.push_back({"mul_scale", [=](int trials, const GradSink& sink) {
                     std::mt19937_64 rng(11);
                     for (int t = 0; t < trials; ++t) {
                       const Shape s{pick(rng, 1, 4), pick(rng, 1, 6)};
                       auto a = random_tensor(s, rng), b = random_tensor(s, rng);
                       check(sink, "mul", [&] { return ad::mul(a, b); }, {a, b});
                       check(sink, "scale", [&] { return ad::scale(a, -1.7); }, {a});
                     }
                   }});
  cases.push_back({"relu", [=](int trials, const GradSink& sink) {
                     std::mt19937_64 rng(12);
                     for (int t = 0; t < trials; ++t) {
                       auto x = kink_free_tensor({pick(rng, 1, 4), pick(rng, 1, 9)}, rng);
                       check(sink, "relu", [&] { return ad::relu(x); }, {x});
                     }
                   }});
  cases.push_back({"sum_mean", [=](int trials, const GradSink& sink) {
                     std::mt19937_64 rng(13);
                     for (int t = 0; t < trials; ++t) {
                       auto x = random_tensor({pick(rng, 1, 5), pick(rng, 1, 5)}, rng);
                       check(sink, "sum", [&] { return ad::sum(x); }, {x});
                       check(sink, "mean", [&] { return ad::mean(x); }, {x});
                     }
                   }});
  cases.push_back({"matmul", [=](int trials, const GradSink& sink) {
                     std::mt19937_64 rng(14);
                     for (int t = 0; t < trials; ++t) {
                       const std::size_t batch = pick(rng, 1, 3), m = pick(rng, 1, 5), k = pick(rng, 1, 5),
                                         n = pick(rng, 1, 5);
                       for (int flags = 0; flags < 4; ++flags) {
                         const bool ta = flags & 1, tb = flags & 2;
                         auto a = random_tensor(ta ? Shape{batch, k, m} : Shape{batch, m, k}, rng);
                         auto b = random_tensor(tb ? Shape{batch, n, k} : Shape{batch, k, n}, rng);
                         check(sink, "matmul " + std::to_string(flags), [&] { return ad::matmul(a, b, ta, tb); },
                               {a, b});
                       }
                     }
                   }});
  cases.push_back({"linear", [=](int trials, const GradSink& sink) {
                     std::mt19937_64 rng(15);
                     for (int t = 0; t < trials; ++t) {
                       const std::size_t in = pick(rng, 1, 6), out = pick(rng, 1, 6);
                       auto x = random_tensor({pick(rng, 1, 3), pick(rng, 1, 3), in}, rng);
                       auto w = random_tensor({out, in}, rng), b = random_tensor({out}, rng);
                       check(sink, "linear", [&] { return ad::linear(x, w, b); }, {x, w, b});
                       check(sink, "linear no bias", [&] { return ad::linear(x, w, TD()); }, {x, w});
                     }
                   }});
  cases.push_back({"conv2d", [=](int trials, const GradSink& sink) {
                     std::mt19937_64 rng(16);
                     for (int t = 0; t < trials; ++t) {
                       const std::size_t k = std::array<std::size_t, 3>{1, 3, 7}[t % 3];
                       const std::size_t stride = pick(rng, 1, 2), pad = k / 2;
                       // Few terms per output for 7x7 kernels keep roundoff below the tolerance.
                       const std::size_t c = pick(rng, 1, k == 7 ? 2 : 3), o = pick(rng, 1, 3);
                       const std::size_t h = pick(rng, k, k + (k == 7 ? 1 : 3)), w = pick(rng, k, k + (k == 7 ? 1 : 3));
                       auto x = random_tensor({pick(rng, 1, 2), c, h, w}, rng);
                       auto wt = random_tensor({o, c, k, k}, rng), b = random_tensor({o}, rng);
                       const ad::Conv2dParams p{stride, pad};
                       check(sink, "conv2d k" + std::to_string(k), [&] { return ad::conv2d(x, wt, b, p); },
                             {x, wt, b});
                       check(sink, "conv2d no bias", [&] { return ad::conv2d(x, wt, TD(), p); }, {x, wt});
                     }
                   }});
  cases.push_back({"avg_pool2d", [=](int trials, const GradSink& sink) {
                     std::mt19937_64 rng(17);
                     for (int t = 0; t < trials; ++t) {
                       const std::size_t k = pick(rng, 1, 3);
                       auto x = random_tensor(
                           {pick(rng, 1, 2), pick(rng, 1, 3), k * pick(rng, 1, 3), k * pick(rng, 1, 3)}, rng);
                       check(sink, "avg_pool2d", [&] { return ad::avg_pool2d(x, k); }, {x});
                     }
                   }});
  cases.push_back({"batch_norm", [=](int trials, const GradSink& sink) {
                     std::mt19937_64 rng(18);
                     for (int t = 0; t < trials; ++t) {
                       const std::size_t c = pick(rng, 1, 3);
                       auto x = random_tensor({pick(rng, 2, 3), c, pick(rng, 1, 3), pick(rng, 1, 3)}, rng);
                       auto gamma = random_tensor({c}, rng, 0.5, 1.5), beta = random_tensor({c}, rng);
                       auto rm = TD::zeros({c}), rv = TD::full({c}, 1.0);
                       check(sink, "batch_norm train", [&] { return ad::batch_norm(x, gamma, beta, rm, rv, true); },
                             {x, gamma, beta});
                       check(sink, "batch_norm eval", [&] { return ad::batch_norm(x, gamma, beta, rm, rv, false); },
                             {x, gamma, beta});
                     }
                   }});
  cases.push_back({"layer_norm", [=](int trials, const GradSink& sink) {
                     std::mt19937_64 rng(19);
                     for (int t = 0; t < trials; ++t) {
                       const std::size_t d = pick(rng, 2, 8);
                       auto x = random_tensor({pick(rng, 1, 3), pick(rng, 1, 3), d}, rng);
                       auto gamma = random_tensor({d}, rng, 0.5, 1.5), beta = random_tensor({d}, rng);
                       check(sink, "layer_norm", [&] { return ad::layer_norm(x, gamma, beta); }, {x, gamma, beta});
                     }
                   }});
  cases.push_back({"masked_softmax", [=](int trials, const GradSink& sink) {
                     const double inf = std::numeric_limits<double>::infinity();
                     std::mt19937_64 rng(20);
                     for (int t = 0; t < trials; ++t) {
                       const std::size_t n = pick(rng, 2, 6);
                       auto x = random_tensor({pick(rng, 1, 3), n, n}, rng, -2, 2);
                       ad::Buffer<double> m(n * n, 0.0);
                       for (std::size_t r = 0; r < n; ++r)
                         for (std::size_t c = 0; c < n; ++c)
                           if (c != r && (r + c + static_cast<std::size_t>(t)) % 3 == 0) m[r * n + c] = -inf;
                       const auto mask = TD::from_data({n, n}, m);
                       check(sink, "masked_softmax", [&] { return ad::masked_softmax(x, mask); }, {x});
                       check(sink, "softmax axis 1", [&] { return ad::masked_softmax(x, TD(), 1); }, {x});
                     }
                   }});
  cases.push_back({"dropout", [=](int trials, const GradSink& sink) {
                     std::mt19937_64 rng(21);
                     for (int t = 0; t < trials; ++t) {
                       auto x = random_tensor({pick(rng, 1, 4), pick(rng, 1, 8)}, rng);
                       const std::uint64_t seed = rng();
                       check(
                           sink, "dropout",
                           [&] {
                             std::mt19937_64 mask_rng(seed);
                             return ad::dropout(x, 0.4, true, mask_rng);
                           },
                           {x});
                     }
                   }});
  cases.push_back({"shape_ops", [=](int trials, const GradSink& sink) {
                     std::mt19937_64 rng(22);
                     for (int t = 0; t < trials; ++t) {
                       const std::size_t a = pick(rng, 1, 3), b = pick(rng, 1, 4), c = pick(rng, 1, 5);
                       auto x = random_tensor({a, b, c}, rng);
                       auto y = random_tensor({a, pick(rng, 1, 3), c}, rng);
                       const std::vector<TD> parts{x, y};
                       check(sink, "concat", [&] { return ad::concat<double>(parts, 1); }, {x, y});
                       check(sink, "reshape", [&] { return ad::reshape(x, {c, a * b}); }, {x});
                       check(sink, "permute", [&] { return ad::permute(x, {2, 0, 1}); }, {x});
                       check(sink, "transpose", [&] { return ad::transpose(x, 0, 2); }, {x});
                       const std::size_t start = pick(rng, 0, c - 1);
                       check(sink, "slice", [&] { return ad::slice(x, 2, start, c - start); }, {x});
                     }
                   }});
  cases.push_back({"shared_inputs", [=](int, const GradSink& sink) {
                     std::mt19937_64 rng(23);
                     auto x = random_tensor({3, 3}, rng);
                     check(sink, "shared", [&] { return ad::mul(ad::matmul(x, x), ad::add(x, x)); }, {x});
                   }});
  return cases;
}

}  // namespace xrot::test
