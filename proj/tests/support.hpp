#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "drawcycle/ops.hpp"
#include "drawcycle/random.hpp"
#include "drawcycle/tensor.hpp"

namespace testsupport {

using drawcycle::Rng;
using drawcycle::Shape;
using drawcycle::Tape;
using drawcycle::Tensor;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = true) {
  Tensor t(shape, requires_grad);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

/// Scalar probe sum(out * w) with fixed random weights, so every output
/// element contributes a distinct coefficient to the checked gradient.
class Probe {
 public:
  Probe(const Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    w_ = random_tensor(shape, rng, -1.0, 1.0, false);
  }
  Tensor operator()(Tape& tape, const Tensor& out) const {
    return drawcycle::sum(tape, drawcycle::mul(tape, out, w_));
  }

 private:
  Tensor w_;
};

struct GradCheck {
  double max_rel_error = 0;  // max over elements of |analytic - numeric| / max(1, |numeric|)
  std::string worst;
  std::size_t evaluations = 0;
};

/// Central finite differences against the tape's reverse pass. `loss` must
/// build a scalar from `inputs` and be a deterministic function of them.
inline GradCheck grad_check(const std::function<Tensor(Tape&)>& loss, std::vector<Tensor> inputs,
                            const std::vector<std::string>& names = {}, double eps = 1e-5) {
  for (auto& t : inputs) t.zero_grad();
  {
    Tape tape;
    const Tensor l = loss(tape);
    tape.backward(l);
  }
  GradCheck r;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& t = inputs[k];
    std::vector<double> analytic(t.numel(), 0.0);
    if (t.has_grad()) {
      const auto g = t.grad();
      analytic.assign(g.begin(), g.end());
    }
    double worst = 0;
    auto d = t.data();
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double orig = d[i];
      d[i] = orig + eps;
      Tape tp;
      const double fp = loss(tp).item();
      d[i] = orig - eps;
      Tape tm;
      const double fm = loss(tm).item();
      d[i] = orig;
      r.evaluations += 2;
      const double num = (fp - fm) / (2 * eps);
      worst = std::max(worst, std::abs(analytic[i] - num) / std::max(1.0, std::abs(num)));
    }
    if (worst >= r.max_rel_error) {
      r.max_rel_error = worst;
      r.worst = k < names.size() ? names[k] : "input " + std::to_string(k);
    }
  }
  return r;
}

}  // namespace testsupport
