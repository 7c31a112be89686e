#include "drawcycle/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>

namespace drawcycle {

namespace {

// Seed streams derived from TrainConfig::seed.
constexpr std::uint64_t kStreamGxy = 1, kStreamGyx = 2, kStreamDx = 3, kStreamDy = 4;
constexpr std::uint64_t kStreamPoolX = 5, kStreamPoolY = 6;
constexpr std::uint64_t kStreamShuffleX = 7, kStreamShuffleY = 8;

void set_requires_grad(std::vector<Tensor>& params, bool flag) {
  for (auto& p : params) p.set_requires_grad(flag);
}

Tensor stack_samples(const std::vector<Tensor>& samples) {
  const Shape one = samples.front().shape();
  Shape shape = one;
  shape[0] = samples.size();
  Tensor out(shape);
  auto d = out.data();
  const std::size_t n = shape_numel(one);
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const auto s = samples[b].data();
    std::copy(s.begin(), s.end(), d.begin() + static_cast<std::ptrdiff_t>(b * n));
  }
  return out;
}

Tensor sample_at(const Tensor& batch, std::size_t b) {
  Shape shape = batch.shape();
  const std::size_t n = batch.numel() / shape[0];
  shape[0] = 1;
  const auto d = batch.data();
  return Tensor(shape, std::vector<double>(d.begin() + static_cast<std::ptrdiff_t>(b * n),
                                           d.begin() + static_cast<std::ptrdiff_t>((b + 1) * n)));
}

std::vector<std::size_t> shuffled(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  return idx;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch > cfg.epochs_total) {
    throw std::invalid_argument("lr_at_epoch: epoch " + std::to_string(epoch) + " outside [0, " +
                                std::to_string(cfg.epochs_total) + "]");
  }
  if (epoch < cfg.epochs_const || cfg.epochs_total == cfg.epochs_const) return cfg.lr0;
  const double done = static_cast<double>(epoch - cfg.epochs_const);
  const double span = static_cast<double>(cfg.epochs_total - cfg.epochs_const);
  return cfg.lr0 * (1.0 - done / span);
}

AdamState AdamState::for_params(std::span<const Tensor> params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.emplace_back(p.shape());
    s.v.emplace_back(p.shape());
  }
  return s;
}

void adam_step(std::span<Tensor> params, AdamState& state, const AdamHyper& h, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: state holds " + std::to_string(state.m.size()) +
                                " moments for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].shape() != params[i].shape() || state.v[i].shape() != params[i].shape()) {
      throw std::invalid_argument("adam_step: moment shape " + shape_str(state.m[i].shape()) +
                                  " does not match parameter " + shape_str(params[i].shape()));
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      // Zero gradient: moments decay, and the update uses the decayed moments.
      for (auto& m : state.m[i].data()) m *= h.beta1;
      for (auto& v : state.v[i].data()) v *= h.beta2;
    } else {
      const auto g = params[i].grad();
      auto m = state.m[i].data();
      auto v = state.v[i].data();
      for (std::size_t j = 0; j < g.size(); ++j) {
        m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g[j];
        v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g[j] * g[j];
      }
    }
    auto p = params[i].data();
    const auto m = state.m[i].data();
    const auto v = state.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      p[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + h.eps);
    }
  }
}

ImagePool::ImagePool(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {}

Tensor ImagePool::query(const Tensor& fresh) {
  if (fresh.dim() == 0 || fresh.extent(0) != 1) {
    throw std::invalid_argument("pool_query: expected a single image, got " + shape_str(fresh.shape()));
  }
  Tensor img = fresh.detach();
  if (capacity_ == 0) return img;
  if (images_.size() < capacity_) {
    images_.push_back(img.clone());
    return img;
  }
  if (rng_.uniform() < 0.5) return img;
  const std::size_t slot = static_cast<std::size_t>(rng_.below(capacity_));
  Tensor old = images_[slot];
  images_[slot] = img.clone();
  return old.clone();
}

GeneratorObjective generator_objective(Tape& tape, CycleGanNets& nets, const TrainConfig& cfg,
                                       const Tensor& x, const Tensor& y) {
  GeneratorObjective o;
  o.values.lambda_cyc = cfg.lambda_cyc;
  o.fake_y = nets.g_xy.forward(tape, x);
  const Tensor rec_x = nets.g_yx.forward(tape, o.fake_y);
  o.fake_x = nets.g_yx.forward(tape, y);
  const Tensor rec_y = nets.g_xy.forward(tape, o.fake_x);
  const Tensor gan_xy = gan_loss_generator(tape, nets.d_y.forward(tape, o.fake_y), cfg.gan_mode);
  const Tensor gan_yx = gan_loss_generator(tape, nets.d_x.forward(tape, o.fake_x), cfg.gan_mode);
  const Tensor cyc = cycle_consistency_loss(tape, x, rec_x, y, rec_y);
  Tensor idt;
  if (cfg.idt_enabled) {
    const Tensor idt_y = nets.g_xy.forward(tape, y);
    const Tensor idt_x = nets.g_yx.forward(tape, x);
    idt = identity_loss(tape, y, idt_y, x, idt_x);
  }
  o.total = total_objective(tape, gan_xy, gan_yx, cyc, idt, cfg.lambda_cyc, cfg.idt_weight);
  o.values.gan_g_xy = gan_xy.item();
  o.values.gan_g_yx = gan_yx.item();
  o.values.cyc = cyc.item();
  if (idt.defined()) o.values.idt = idt.item();
  o.values.total_g = o.total.item();
  return o;
}

Trainer::Trainer(const TrainConfig& cfg)
    : cfg_((cfg.validate(), cfg)),
      hyper_{cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps},
      nets_{GeneratorNet(cfg.generator_config(), derive_seed(cfg.seed, kStreamGxy)),
            GeneratorNet(cfg.generator_config(), derive_seed(cfg.seed, kStreamGyx)),
            DiscriminatorNet(cfg.discriminator_config(), derive_seed(cfg.seed, kStreamDx)),
            DiscriminatorNet(cfg.discriminator_config(), derive_seed(cfg.seed, kStreamDy))},
      pool_x_(cfg.pool_size, derive_seed(cfg.seed, kStreamPoolX)),
      pool_y_(cfg.pool_size, derive_seed(cfg.seed, kStreamPoolY)),
      shuffle_x_(derive_seed(cfg.seed, kStreamShuffleX)),
      shuffle_y_(derive_seed(cfg.seed, kStreamShuffleY)) {
  g_params_ = nets_.g_xy.parameters();
  for (auto& p : nets_.g_yx.parameters()) g_params_.push_back(p);
  dx_params_ = nets_.d_x.parameters();
  dy_params_ = nets_.d_y.parameters();
  adam_g_ = AdamState::for_params(g_params_);
  adam_dx_ = AdamState::for_params(dx_params_);
  adam_dy_ = AdamState::for_params(dy_params_);
}

void Trainer::check_finite(double value, const char* term) const {
  if (!std::isfinite(value)) {
    throw TrainingError("non-finite " + std::string(term) + " loss (" + fmt17(value) + ") at step " +
                        std::to_string(global_step_) + ", epoch " + std::to_string(epochs_done_ + 1));
  }
}

Tensor Trainer::discriminator_step(DiscriminatorNet& d, std::vector<Tensor>& params, AdamState& adam,
                                   const Tensor& real, const Tensor& fake, double lr) {
  Tape tape;
  zero_grad(params);
  const Tensor real_logits = d.forward(tape, real);
  const Tensor fake_logits = d.forward(tape, fake);
  Tensor loss = gan_loss_discriminator(tape, real_logits, fake_logits);
  tape.backward(loss);
  adam_step(params, adam, hyper_, lr);
  return loss;
}

LossBundle Trainer::train_step(const Tensor& x, const Tensor& y, double lr) {
  const std::size_t s = cfg_.image_size;
  for (const Tensor* t : {&x, &y}) {
    if (t->dim() != 4 || t->extent(1) != 1 || t->extent(2) != s || t->extent(3) != s) {
      throw std::invalid_argument("train_step: batch shape " + shape_str(t->shape()) +
                                  " does not match image_size " + std::to_string(s));
    }
  }
  LossBundle out;
  Tensor fake_x, fake_y;
  {
    // Generator update. Discriminator weights are frozen for this pass so no
    // gradient is spent on them; gradients still flow through to the fakes.
    Tape tape;
    zero_grad(g_params_);
    set_requires_grad(dx_params_, false);
    set_requires_grad(dy_params_, false);
    GeneratorObjective obj = generator_objective(tape, nets_, cfg_, x, y);
    out = obj.values;
    fake_x = obj.fake_x;
    fake_y = obj.fake_y;
    check_finite(out.gan_g_xy, "gan_g_xy");
    check_finite(out.gan_g_yx, "gan_g_yx");
    check_finite(out.cyc, "cyc");
    if (out.idt) check_finite(*out.idt, "idt");
    check_finite(out.total_g, "total_g");

    tape.backward(obj.total);
    set_requires_grad(dx_params_, true);
    set_requires_grad(dy_params_, true);
    adam_step(g_params_, adam_g_, hyper_, lr);
  }

  std::vector<Tensor> pooled_x, pooled_y;
  for (std::size_t b = 0; b < x.extent(0); ++b) pooled_x.push_back(pool_x_.query(sample_at(fake_x, b)));
  for (std::size_t b = 0; b < y.extent(0); ++b) pooled_y.push_back(pool_y_.query(sample_at(fake_y, b)));
  const Tensor fx = stack_samples(pooled_x);
  const Tensor fy = stack_samples(pooled_y);
  double dx_sum = 0, dy_sum = 0;
  for (std::size_t k = 0; k < cfg_.d_steps_per_g; ++k) {
    const double dy = discriminator_step(nets_.d_y, dy_params_, adam_dy_, y, fy, lr).item();
    check_finite(dy, "gan_d_y");
    const double dx = discriminator_step(nets_.d_x, dx_params_, adam_dx_, x, fx, lr).item();
    check_finite(dx, "gan_d_x");
    dy_sum += dy;
    dx_sum += dx;
  }
  out.gan_d_x = dx_sum / static_cast<double>(cfg_.d_steps_per_g);
  out.gan_d_y = dy_sum / static_cast<double>(cfg_.d_steps_per_g);
  ++global_step_;
  return out;
}

EpochRecord Trainer::run_epoch(const TrainData& data) {
  if (data.x.empty() || data.y.empty()) throw std::invalid_argument("train: empty domain");
  if (epochs_done_ >= cfg_.epochs_total) throw std::logic_error("train: all epochs already done");
  const auto start = std::chrono::steady_clock::now();
  const double lr = lr_at_epoch(cfg_, epochs_done_);
  const auto px = shuffled(data.x.size(), shuffle_x_);
  const auto py = shuffled(data.y.size(), shuffle_y_);
  const std::size_t samples = std::max(data.x.size(), data.y.size());
  const std::size_t steps = (samples + cfg_.batch_size - 1) / cfg_.batch_size;

  EpochRecord rec;
  rec.losses.lambda_cyc = cfg_.lambda_cyc;
  double idt_sum = 0;
  for (std::size_t step = 0; step < steps; ++step) {
    std::vector<GrayImage> bx, by;
    for (std::size_t j = 0; j < cfg_.batch_size; ++j) {
      const std::size_t i = step * cfg_.batch_size + j;
      bx.push_back(data.x[px[i % px.size()]]);
      by.push_back(data.y[py[i % py.size()]]);
    }
    const LossBundle l = train_step(images_to_tensor(bx), images_to_tensor(by), lr);
    rec.losses.gan_g_xy += l.gan_g_xy;
    rec.losses.gan_g_yx += l.gan_g_yx;
    rec.losses.gan_d_x += l.gan_d_x;
    rec.losses.gan_d_y += l.gan_d_y;
    rec.losses.cyc += l.cyc;
    rec.losses.total_g += l.total_g;
    if (l.idt) idt_sum += *l.idt;
  }
  const double n = static_cast<double>(steps);
  rec.losses.gan_g_xy /= n;
  rec.losses.gan_g_yx /= n;
  rec.losses.gan_d_x /= n;
  rec.losses.gan_d_y /= n;
  rec.losses.cyc /= n;
  rec.losses.total_g /= n;
  if (cfg_.idt_enabled) rec.losses.idt = idt_sum / n;
  ++epochs_done_;
  rec.epoch = epochs_done_;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

std::vector<EpochRecord> Trainer::run(const TrainData& data, const EpochCallback& on_epoch) {
  if (data.x.empty() || data.y.empty()) throw std::invalid_argument("train: empty domain");
  std::vector<EpochRecord> history;
  while (epochs_done_ < cfg_.epochs_total) {
    history.push_back(run_epoch(data));
    if (on_epoch) on_epoch(history.back(), *this);
  }
  return history;
}

StateList Trainer::full_state() const {
  StateList out;
  auto add = [&](const std::string& prefix, const StateList& list) {
    for (const auto& e : list) out.push_back({prefix + e.name, e.tensor, e.trainable});
  };
  add("g_xy.", nets_.g_xy.state());
  add("g_yx.", nets_.g_yx.state());
  add("d_x.", nets_.d_x.state());
  add("d_y.", nets_.d_y.state());
  auto moments = [&](const std::string& prefix, const AdamState& s) {
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      out.push_back({prefix + ".m." + std::to_string(i), s.m[i], false});
      out.push_back({prefix + ".v." + std::to_string(i), s.v[i], false});
    }
  };
  moments("adam_g", adam_g_);
  moments("adam_d_x", adam_dx_);
  moments("adam_d_y", adam_dy_);
  return out;
}

TrainResult train_run(const TrainConfig& cfg, const TrainData& data,
                      const Trainer::EpochCallback& on_epoch) {
  if (data.x.empty() || data.y.empty()) throw std::invalid_argument("train_run: empty dataset");
  TrainResult r{Trainer(cfg), {}};
  r.history = r.trainer.run(data, on_epoch);
  return r;
}

std::string losses_csv_header() { return "epoch,gan_g_xy,gan_g_yx,gan_d_x,gan_d_y,cyc,idt,total_g"; }

std::string losses_csv_row(const EpochRecord& r) {
  const LossBundle& l = r.losses;
  return std::to_string(r.epoch) + "," + fmt17(l.gan_g_xy) + "," + fmt17(l.gan_g_yx) + "," +
         fmt17(l.gan_d_x) + "," + fmt17(l.gan_d_y) + "," + fmt17(l.cyc) + "," +
         (l.idt ? fmt17(*l.idt) : std::string()) + "," + fmt17(l.total_g);
}

void write_losses_csv(std::span<const EpochRecord> history, std::ostream& out) {
  out << losses_csv_header() << '\n';
  for (const auto& r : history) out << losses_csv_row(r) << '\n';
}

}  // namespace drawcycle
