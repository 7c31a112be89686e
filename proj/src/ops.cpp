#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "drawcycle/ops.hpp"

namespace drawcycle {

double softplus_value(double x) {
  // max(x, 0) + log1p(exp(-|x|))
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

namespace {

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor ew_binary(Tape& tape, const Tensor& a, const Tensor& b, BinaryKind kind) {
  const bool broadcast = b.numel() == 1 && a.numel() != 1;
  if (!broadcast && a.shape() != b.shape()) {
    throw std::invalid_argument("ew_binary: shapes " + shape_str(a.shape()) + " and " +
                                shape_str(b.shape()) + " are not broadcastable");
  }
  Tensor out(a.shape());
  const auto x = a.data();
  const auto y = b.data();
  auto o = out.data();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double yi = broadcast ? y[0] : y[i];
    switch (kind) {
      case BinaryKind::add: o[i] = x[i] + yi; break;
      case BinaryKind::sub: o[i] = x[i] - yi; break;
      case BinaryKind::mul: o[i] = x[i] * yi; break;
    }
  }
  tape.record(out, {a, b}, [a, b, out, kind, broadcast]() mutable {
    const auto g = out.grad();
    const auto x = a.data();
    const auto y = b.data();
    const std::size_t n = g.size();
    if (a.requires_grad()) {
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < n; ++i) {
        ga[i] += kind == BinaryKind::mul ? g[i] * (broadcast ? y[0] : y[i]) : g[i];
      }
    }
    if (b.requires_grad()) {
      auto gb = b.mutable_grad();
      for (std::size_t i = 0; i < n; ++i) {
        double d = g[i];
        if (kind == BinaryKind::sub) d = -d;
        if (kind == BinaryKind::mul) d *= x[i];
        gb[broadcast ? 0 : i] += d;
      }
    }
  });
  return out;
}

Tensor ew_unary(Tape& tape, const Tensor& a, UnaryKind kind) {
  Tensor out(a.shape());
  const auto x = a.data();
  auto o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) {
    switch (kind) {
      case UnaryKind::neg: o[i] = -x[i]; break;
      case UnaryKind::abs: o[i] = std::abs(x[i]); break;
      case UnaryKind::log:
        if (!(x[i] > 0)) throw std::invalid_argument("log: non-positive input");
        o[i] = std::log(x[i]);
        break;
      case UnaryKind::tanh: o[i] = std::tanh(x[i]); break;
      case UnaryKind::sigmoid: o[i] = sigmoid_value(x[i]); break;
      case UnaryKind::softplus: o[i] = softplus_value(x[i]); break;
    }
  }
  tape.record(out, {a}, [a, out, kind]() mutable {
    const auto g = out.grad();
    const auto x = a.data();
    const auto y = out.data();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = 0;
      switch (kind) {
        case UnaryKind::neg: d = -1; break;
        case UnaryKind::abs: d = x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0); break;
        case UnaryKind::log: d = 1.0 / x[i]; break;
        case UnaryKind::tanh: d = 1.0 - y[i] * y[i]; break;
        case UnaryKind::sigmoid: d = y[i] * (1.0 - y[i]); break;
        case UnaryKind::softplus: d = sigmoid_value(x[i]); break;
      }
      ga[i] += g[i] * d;
    }
  });
  return out;
}

Tensor reduce(Tape& tape, const Tensor& a, ReduceKind kind) {
  const auto x = a.data();
  if (x.empty()) throw std::invalid_argument("reduce: empty tensor");
  double s = 0;
  for (double v : x) s += v;
  const double factor = kind == ReduceKind::mean ? 1.0 / static_cast<double>(x.size()) : 1.0;
  Tensor out = Tensor::scalar(s * factor);
  tape.record(out, {a}, [a, out, factor]() mutable {
    const double g = out.grad()[0] * factor;
    for (auto& v : a.mutable_grad()) v += g;
  });
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  Tensor out(a.shape());
  const auto x = a.data();
  auto o = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) o[i] = x[i] * factor;
  tape.record(out, {a}, [a, out, factor]() mutable {
    const auto g = out.grad();
    auto ga = a.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
  return out;
}

Tensor reflect_pad(Tape& tape, const Tensor& input, std::size_t pad) {
  if (input.dim() != 4) throw std::invalid_argument("reflect_pad: expected BCHW input");
  const std::size_t b = input.extent(0), c = input.extent(1), h = input.extent(2),
                    w = input.extent(3);
  if (pad >= h || pad >= w) {
    throw std::invalid_argument("reflect_pad: pad " + std::to_string(pad) +
                                " must be smaller than extents " + shape_str(input.shape()));
  }
  if (pad == 0) {
    // Still a distinct node so callers may treat the result uniformly.
    return scale(tape, input, 1.0);
  }
  const std::size_t ho = h + 2 * pad, wo = w + 2 * pad;
  auto reflect = [](std::ptrdiff_t t, std::ptrdiff_t n) -> std::size_t {
    if (t < 0) t = -t;
    if (t >= n) t = 2 * (n - 1) - t;
    return static_cast<std::size_t>(t);
  };
  // Source index for every output position of one plane.
  std::vector<std::size_t> src(ho * wo);
  for (std::size_t i = 0; i < ho; ++i) {
    const auto si = reflect(static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(pad),
                            static_cast<std::ptrdiff_t>(h));
    for (std::size_t j = 0; j < wo; ++j) {
      const auto sj = reflect(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(pad),
                              static_cast<std::ptrdiff_t>(w));
      src[i * wo + j] = si * w + sj;
    }
  }
  Tensor out(Shape{b, c, ho, wo});
  const auto x = input.data();
  auto o = out.data();
  const std::size_t planes = b * c;
  for (std::size_t p = 0; p < planes; ++p) {
    const double* xp = x.data() + p * h * w;
    double* op = o.data() + p * ho * wo;
    for (std::size_t k = 0; k < ho * wo; ++k) op[k] = xp[src[k]];
  }
  tape.record(out, {input}, [input, out, src = std::move(src), planes, h, w, ho, wo]() mutable {
    const auto g = out.grad();
    auto gi = input.mutable_grad();
    for (std::size_t p = 0; p < planes; ++p) {
      const double* gp = g.data() + p * ho * wo;
      double* ip = gi.data() + p * h * w;
      for (std::size_t k = 0; k < ho * wo; ++k) ip[src[k]] += gp[k];
    }
  });
  return out;
}

}  // namespace drawcycle
