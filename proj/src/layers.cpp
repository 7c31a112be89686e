#include "drawcycle/layers.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

namespace drawcycle {

std::vector<Tensor> trainable_tensors(const StateList& state) {
  std::vector<Tensor> out;
  for (const auto& e : state) {
    if (e.trainable) out.push_back(e.tensor);
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& x) { return leaky_relu(tape, x, 0.0); }

Tensor leaky_relu(Tape& tape, const Tensor& x, double alpha) {
  Tensor out(x.shape());
  const auto xs = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) o[i] = xs[i] > 0 ? xs[i] : alpha * xs[i];
  tape.record(out, {x}, [x, out, alpha]() mutable {
    const auto g = out.grad();
    const auto xs = x.data();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xs[i] > 0 ? g[i] : alpha * g[i];
  });
  return out;
}

Tensor instance_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& shift,
                     double eps) {
  if (x.dim() != 4) throw std::invalid_argument("instance_norm: expected BCHW input");
  const std::size_t batch = x.extent(0), channels = x.extent(1);
  const std::size_t plane = x.extent(2) * x.extent(3);
  if (plane < 2) throw std::invalid_argument("instance_norm: needs H * W >= 2");
  if (gain.numel() != channels || shift.numel() != channels) {
    throw std::invalid_argument("instance_norm: affine parameters do not match " +
                                std::to_string(channels) + " channels");
  }
  Tensor out(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(batch * channels);
  const auto xs = x.data();
  const auto gs = gain.data();
  const auto ss = shift.data();
  auto o = out.data();
  const double inv_n = 1.0 / static_cast<double>(plane);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t base = (b * channels + c) * plane;
      double mean = 0;
      for (std::size_t i = 0; i < plane; ++i) mean += xs[base + i];
      mean *= inv_n;
      double var = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double d = xs[base + i] - mean;
        var += d * d;
      }
      var *= inv_n;
      const double is = 1.0 / std::sqrt(var + eps);
      (*inv_std)[b * channels + c] = is;
      for (std::size_t i = 0; i < plane; ++i) {
        const double h = (xs[base + i] - mean) * is;
        (*xhat)[base + i] = h;
        o[base + i] = gs[c] * h + ss[c];
      }
    }
  }
  tape.record(out, {x, gain, shift},
              [x, gain, shift, out, xhat, inv_std, batch, channels, plane, inv_n]() mutable {
    const auto g = out.grad();
    const auto gs = gain.data();
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t base = (b * channels + c) * plane;
        double sum_g = 0, sum_gh = 0;
        for (std::size_t i = 0; i < plane; ++i) {
          sum_g += g[base + i];
          sum_gh += g[base + i] * (*xhat)[base + i];
        }
        if (gain.requires_grad()) gain.mutable_grad()[c] += sum_gh;
        if (shift.requires_grad()) shift.mutable_grad()[c] += sum_g;
        if (x.requires_grad()) {
          auto gx = x.mutable_grad();
          const double k = gs[c] * (*inv_std)[b * channels + c];
          const double mean_g = sum_g * inv_n;
          const double mean_gh = sum_gh * inv_n;
          for (std::size_t i = 0; i < plane; ++i) {
            gx[base + i] += k * (g[base + i] - mean_g - (*xhat)[base + i] * mean_gh);
          }
        }
      }
    }
  });
  return out;
}

void RReLUConfig::validate() const {
  if (!(0 < lower && lower < upper && upper < 1)) {
    throw std::invalid_argument("rrelu: bounds must satisfy 0 < lower < upper < 1");
  }
}

Tensor rrelu_forward(Tape& tape, const Tensor& x, const RReLUConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto xs = x.data();
  auto slopes = std::make_shared<std::vector<double>>(xs.size());
  if (cfg.training) {
    for (auto& s : *slopes) s = rng.uniform(cfg.lower, cfg.upper);
  } else {
    std::fill(slopes->begin(), slopes->end(), cfg.eval_slope());
  }
  Tensor out(x.shape());
  auto o = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) o[i] = xs[i] > 0 ? xs[i] : (*slopes)[i] * xs[i];
  tape.record(out, {x}, [x, out, slopes]() mutable {
    const auto g = out.grad();
    const auto xs = x.data();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xs[i] > 0 ? g[i] : (*slopes)[i] * g[i];
  });
  return out;
}

void KWinnersConfig::validate() const {
  if (units == 0) throw std::invalid_argument("kwinners: unit count must be positive");
  if (k < 1 || k > units) {
    throw std::invalid_argument("kwinners: k = " + std::to_string(k) + " outside [1, " +
                                std::to_string(units) + "]");
  }
  if (boost_strength < 0) throw std::invalid_argument("kwinners: negative boost strength");
  if (duty_period == 0) throw std::invalid_argument("kwinners: duty period must be positive");
}

std::size_t winners_for_fraction(std::size_t units, double fraction) {
  if (!(fraction > 0 && fraction <= 1)) {
    throw std::invalid_argument("kwinners: winner fraction must lie in (0, 1]");
  }
  const double raw = fraction * static_cast<double>(units);
  const auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9));
  return std::clamp<std::size_t>(k, 1, units);
}

KWinners::KWinners(KWinnersConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  duty_cycle_ = Tensor(Shape{cfg_.units});
}

void KWinners::update_duty_cycle(std::span<const std::uint8_t> winners) {
  if (!training_) return;
  if (winners.size() != cfg_.units) {
    throw std::invalid_argument("kwinners: indicator length does not match unit count");
  }
  const double rate = 1.0 / static_cast<double>(cfg_.duty_period);
  auto duty = duty_cycle_.data();
  for (std::size_t i = 0; i < winners.size(); ++i) {
    duty[i] = duty[i] * (1.0 - rate) + (winners[i] ? rate : 0.0);
  }
}

Tensor KWinners::forward(Tape& tape, const Tensor& x) {
  if (x.dim() < 2) throw std::invalid_argument("kwinners: expected a batched input");
  const std::size_t batch = x.extent(0);
  const std::size_t n = x.numel() / batch;
  if (n != cfg_.units) {
    throw std::invalid_argument("kwinners: input has " + std::to_string(n) +
                                " units per sample, layer expects " + std::to_string(cfg_.units));
  }
  const std::size_t k = cfg_.k;
  const double density = static_cast<double>(k) / static_cast<double>(n);
  auto keep = std::make_shared<std::vector<std::uint8_t>>(x.numel(), 0);
  Tensor out(x.shape());
  const auto xs = x.data();
  auto o = out.data();
  std::vector<double> score(n);
  std::vector<std::uint32_t> order(n);
  const bool boost = training_ && cfg_.boost_strength > 0;
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xb = xs.data() + b * n;
    if (boost) {
      const auto duty = duty_cycle_.data();
      for (std::size_t i = 0; i < n; ++i) {
        score[i] = xb[i] * std::exp(cfg_.boost_strength * (density - duty[i]));
      }
    } else {
      std::copy(xb, xb + n, score.begin());
    }
    std::iota(order.begin(), order.end(), 0u);
    if (k < n) {
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1),
                       order.end(), [&](std::uint32_t a, std::uint32_t c) {
                         return score[a] > score[c] || (score[a] == score[c] && a < c);
                       });
    }
    std::uint8_t* kb = keep->data() + b * n;
    for (std::size_t j = 0; j < k; ++j) kb[order[j]] = 1;
    double* ob = o.data() + b * n;
    for (std::size_t i = 0; i < n; ++i) ob[i] = kb[i] ? xb[i] : 0.0;
    if (training_) update_duty_cycle(std::span<const std::uint8_t>(kb, n));
  }
  tape.record(out, {x}, [x, out, keep]() mutable {
    const auto g = out.grad();
    auto gx = x.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if ((*keep)[i]) gx[i] += g[i];
    }
  });
  return out;
}

void KWinners::collect(StateList& out, const std::string& prefix) const {
  out.push_back({prefix + "duty_cycle", duty_cycle_, false});
}

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t padding, bool with_bias)
    : weight(Shape{out_channels, in_channels, kernel, kernel}, true),
      stride(stride),
      padding(padding) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0) {
    throw std::invalid_argument("conv2d: channels, kernel and stride must be positive");
  }
  if (with_bias) bias = Tensor(Shape{out_channels}, true);
}

Tensor Conv2d::forward(Tape& tape, const Tensor& x) const {
  return conv2d(tape, x, weight, bias, stride, padding);
}

void Conv2d::init_normal(Rng& rng, double stddev) {
  for (auto& w : weight.data()) w = rng.normal(0.0, stddev);
  if (bias.defined()) std::fill(bias.data().begin(), bias.data().end(), 0.0);
}

void Conv2d::collect(StateList& out, const std::string& prefix) const {
  out.push_back({prefix + "weight", weight, true});
  if (bias.defined()) out.push_back({prefix + "bias", bias, true});
}

std::size_t mask_ones_count(std::size_t total, double weight_sparsity) {
  if (!(weight_sparsity >= 0 && weight_sparsity < 1)) {
    throw std::invalid_argument("sparse mask: weight sparsity must lie in [0, 1)");
  }
  const double raw = (1.0 - weight_sparsity) * static_cast<double>(total);
  return std::min(total, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

Tensor sparse_mask_init(const Shape& shape, double weight_sparsity, std::uint64_t seed) {
  const std::size_t total = shape_numel(shape);
  const std::size_t ones = mask_ones_count(total, weight_sparsity);
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  // Partial Fisher-Yates: the first `ones` slots become a uniform subset.
  for (std::size_t i = 0; i < ones; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(total - i));
    std::swap(idx[i], idx[j]);
  }
  Tensor mask(shape);
  auto m = mask.data();
  for (std::size_t i = 0; i < ones; ++i) m[idx[i]] = 1.0;
  return mask;
}

SparseConv2d::SparseConv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                           std::size_t stride, std::size_t padding, double weight_sparsity,
                           std::uint64_t mask_seed, bool with_bias)
    : conv(in_channels, out_channels, kernel, stride, padding, with_bias),
      mask(sparse_mask_init(conv.weight.shape(), weight_sparsity, mask_seed)),
      weight_sparsity(weight_sparsity) {
  apply_mask();
}

Tensor SparseConv2d::forward(Tape& tape, const Tensor& x) const {
  const Tensor masked = mul(tape, conv.weight, mask);
  return conv2d(tape, x, masked, conv.bias, conv.stride, conv.padding);
}

void SparseConv2d::init_normal(Rng& rng, double stddev) {
  conv.init_normal(rng, stddev);
  apply_mask();
}

void SparseConv2d::apply_mask() {
  auto w = conv.weight.data();
  const auto m = mask.data();
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (m[i] == 0.0) w[i] = 0.0;
  }
}

void SparseConv2d::collect(StateList& out, const std::string& prefix) const {
  conv.collect(out, prefix);
  out.push_back({prefix + "mask", mask, false});
}

ConvTranspose2d::ConvTranspose2d(std::size_t in_channels, std::size_t out_channels,
                                 std::size_t kernel, std::size_t stride, std::size_t padding,
                                 bool with_bias)
    : weight(Shape{in_channels, out_channels, kernel, kernel}, true),
      stride(stride),
      padding(padding) {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0) {
    throw std::invalid_argument("conv_transpose2d: channels, kernel and stride must be positive");
  }
  if (with_bias) bias = Tensor(Shape{out_channels}, true);
}

Tensor ConvTranspose2d::forward(Tape& tape, const Tensor& x) const {
  return conv_transpose2d(tape, x, weight, bias, stride, padding);
}

void ConvTranspose2d::init_normal(Rng& rng, double stddev) {
  for (auto& w : weight.data()) w = rng.normal(0.0, stddev);
  if (bias.defined()) std::fill(bias.data().begin(), bias.data().end(), 0.0);
}

void ConvTranspose2d::collect(StateList& out, const std::string& prefix) const {
  out.push_back({prefix + "weight", weight, true});
  if (bias.defined()) out.push_back({prefix + "bias", bias, true});
}

InstanceNorm2d::InstanceNorm2d(std::size_t channels, double eps)
    : gain(Shape{channels}, true), shift(Shape{channels}, true), eps(eps) {
  reset();
}

Tensor InstanceNorm2d::forward(Tape& tape, const Tensor& x) const {
  return instance_norm(tape, x, gain, shift, eps);
}

void InstanceNorm2d::reset() {
  std::fill(gain.data().begin(), gain.data().end(), 1.0);
  std::fill(shift.data().begin(), shift.data().end(), 0.0);
}

void InstanceNorm2d::collect(StateList& out, const std::string& prefix) const {
  out.push_back({prefix + "gain", gain, true});
  out.push_back({prefix + "shift", shift, true});
}

Tensor apply_activation(Tape& tape, Activation& act, const Tensor& x) {
  struct Visitor {
    Tape& tape;
    const Tensor& x;
    Tensor operator()(Relu&) const { return relu(tape, x); }
    Tensor operator()(LeakyRelu& a) const { return leaky_relu(tape, x, a.alpha); }
    Tensor operator()(RReLU& a) const { return rrelu_forward(tape, x, a.cfg, a.rng); }
    Tensor operator()(KWinners& a) const { return a.forward(tape, x); }
  };
  return std::visit(Visitor{tape, x}, act);
}

void set_training(Activation& act, bool flag) {
  if (auto* r = std::get_if<RReLU>(&act)) r->cfg.training = flag;
  if (auto* k = std::get_if<KWinners>(&act)) k->set_training(flag);
}

void collect_activation(const Activation& act, StateList& out, const std::string& prefix) {
  if (const auto* k = std::get_if<KWinners>(&act)) k->collect(out, prefix);
}

Tensor apply_conv(Tape& tape, const AnyConv& conv, const Tensor& x) {
  return std::visit([&](const auto& c) { return c.forward(tape, x); }, conv);
}

void init_conv(AnyConv& conv, Rng& rng, double stddev) {
  std::visit([&](auto& c) { c.init_normal(rng, stddev); }, conv);
}

void collect_conv(const AnyConv& conv, StateList& out, const std::string& prefix) {
  std::visit([&](const auto& c) { c.collect(out, prefix); }, conv);
}

namespace {
const Conv2d& base_conv(const AnyConv& c) {
  if (const auto* s = std::get_if<SparseConv2d>(&c)) return s->conv;
  return std::get<Conv2d>(c);
}
}  // namespace

ResidualBlock::ResidualBlock(AnyConv conv_a, AnyConv conv_b, std::size_t channels, Activation act)
    : conv_a(std::move(conv_a)),
      conv_b(std::move(conv_b)),
      norm_a(channels),
      norm_b(channels),
      act(std::move(act)) {
  for (const AnyConv* c : {&this->conv_a, &this->conv_b}) {
    const auto& s = base_conv(*c).weight.shape();
    if (s[0] != channels || s[1] != channels || s[2] != 3 || base_conv(*c).stride != 1 ||
        base_conv(*c).padding != 0) {
      throw std::invalid_argument("residual block: convolutions must be 3x3, stride 1, unpadded, " +
                                  std::to_string(channels) + " -> " + std::to_string(channels) +
                                  " channels");
    }
  }
}

Tensor ResidualBlock::forward(Tape& tape, const Tensor& x) {
  Tensor h = apply_conv(tape, conv_a, reflect_pad(tape, x, 1));
  h = apply_activation(tape, act, norm_a.forward(tape, h));
  h = norm_b.forward(tape, apply_conv(tape, conv_b, reflect_pad(tape, h, 1)));
  return add(tape, x, h);
}

void ResidualBlock::init(Rng& rng, double stddev) {
  init_conv(conv_a, rng, stddev);
  init_conv(conv_b, rng, stddev);
  norm_a.reset();
  norm_b.reset();
}

void ResidualBlock::set_training(bool flag) { drawcycle::set_training(act, flag); }

void ResidualBlock::collect(StateList& out, const std::string& prefix) const {
  collect_conv(conv_a, out, prefix + "conv_a.");
  norm_a.collect(out, prefix + "norm_a.");
  collect_activation(act, out, prefix + "act.");
  collect_conv(conv_b, out, prefix + "conv_b.");
  norm_b.collect(out, prefix + "norm_b.");
}

}  // namespace drawcycle
