#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "drawcycle/ops.hpp"
#include "drawcycle/random.hpp"
#include "drawcycle/tensor.hpp"

namespace drawcycle {

/// One named piece of persistent module state. Trainable entries are the
/// optimizer's parameters; the rest are buffers (sparsity masks, duty cycles).
struct StateEntry {
  std::string name;
  Tensor tensor;
  bool trainable;
};
using StateList = std::vector<StateEntry>;

std::vector<Tensor> trainable_tensors(const StateList& state);

// ---------------------------------------------------------------------------
// Stateless activations and normalization

Tensor relu(Tape& tape, const Tensor& x);
/// x for x > 0, alpha * x otherwise (the slope at exactly 0 is alpha).
Tensor leaky_relu(Tape& tape, const Tensor& x, double alpha);

/// Per-sample, per-channel standardization followed by a per-channel affine
/// map. Requires H * W >= 2.
Tensor instance_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& shift,
                     double eps = 1e-5);

// ---------------------------------------------------------------------------
// RReLU

struct RReLUConfig {
  double lower = 1.0 / 8.0;
  double upper = 1.0 / 3.0;
  bool training = true;

  double eval_slope() const { return 0.5 * (lower + upper); }
  void validate() const;
};

/// Randomized leaky rectifier. In training each element draws its own
/// negative-side slope from U(lower, upper); the same slopes are used in the
/// backward pass. In eval mode the slope is the midpoint (lower + upper) / 2.
Tensor rrelu_forward(Tape& tape, const Tensor& x, const RReLUConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// K-Winners

struct KWinnersConfig {
  std::size_t units = 0;         // n: units per sample
  std::size_t k = 0;             // winners per sample
  double boost_strength = 1.5;   // beta
  std::size_t duty_period = 1000;

  void validate() const;
};

/// k as the ceiling of fraction * units, never below 1.
std::size_t winners_for_fraction(std::size_t units, double fraction);

/// k-winners-take-all over all units of a sample, with duty-cycle boosting.
///
/// Training mode ranks units by x_i * exp(beta * (k/n - duty_i)) and then
/// updates each unit's duty cycle as an exponential moving average of how
/// often it wins. Eval mode ranks by x_i alone and leaves duty cycles frozen.
/// Winners keep their original value; ties go to the lower unit index.
class KWinners {
 public:
  explicit KWinners(KWinnersConfig cfg);

  Tensor forward(Tape& tape, const Tensor& x);
  void update_duty_cycle(std::span<const std::uint8_t> winners);

  const KWinnersConfig& config() const { return cfg_; }
  const Tensor& duty_cycle() const { return duty_cycle_; }
  bool training() const { return training_; }
  void set_training(bool flag) { training_ = flag; }
  void collect(StateList& out, const std::string& prefix) const;

 private:
  KWinnersConfig cfg_;
  Tensor duty_cycle_;
  bool training_ = true;
};

// ---------------------------------------------------------------------------
// Parameterized layers

class Conv2d {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
         std::size_t stride, std::size_t padding, bool with_bias = true);

  Tensor forward(Tape& tape, const Tensor& x) const;
  void init_normal(Rng& rng, double stddev);
  void collect(StateList& out, const std::string& prefix) const;

  Tensor weight;
  Tensor bias;
  std::size_t stride;
  std::size_t padding;
};

/// Exactly ceil((1 - sparsity) * numel) ones at uniformly random positions.
Tensor sparse_mask_init(const Shape& shape, double weight_sparsity, std::uint64_t seed);
std::size_t mask_ones_count(std::size_t total, double weight_sparsity);

/// Convolution whose weight carries a fixed binary mask chosen at
/// construction. The forward pass uses weight * mask, so masked weights get
/// zero gradient and stay at exactly zero under any gradient-based update.
class SparseConv2d {
 public:
  SparseConv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
               std::size_t stride, std::size_t padding, double weight_sparsity,
               std::uint64_t mask_seed, bool with_bias = true);

  Tensor forward(Tape& tape, const Tensor& x) const;
  void init_normal(Rng& rng, double stddev);
  void collect(StateList& out, const std::string& prefix) const;
  /// Zeroes weights wherever the mask is 0.
  void apply_mask();

  Conv2d conv;
  Tensor mask;
  double weight_sparsity;
};

class ConvTranspose2d {
 public:
  ConvTranspose2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  std::size_t stride, std::size_t padding, bool with_bias = true);

  Tensor forward(Tape& tape, const Tensor& x) const;
  void init_normal(Rng& rng, double stddev);
  void collect(StateList& out, const std::string& prefix) const;

  Tensor weight;  // (in, out, K, K)
  Tensor bias;
  std::size_t stride;
  std::size_t padding;
};

class InstanceNorm2d {
 public:
  explicit InstanceNorm2d(std::size_t channels, double eps = 1e-5);

  Tensor forward(Tape& tape, const Tensor& x) const;
  void reset();
  void collect(StateList& out, const std::string& prefix) const;

  Tensor gain;
  Tensor shift;
  double eps;
};

struct Relu {};
struct LeakyRelu {
  double alpha = 0.2;
};
class RReLU {
 public:
  RReLU(RReLUConfig cfg, std::uint64_t seed) : cfg(cfg), rng(seed) { cfg.validate(); }
  RReLUConfig cfg;
  Rng rng;
};

using Activation = std::variant<Relu, LeakyRelu, RReLU, KWinners>;
Tensor apply_activation(Tape& tape, Activation& act, const Tensor& x);
void set_training(Activation& act, bool flag);
void collect_activation(const Activation& act, StateList& out, const std::string& prefix);

using AnyConv = std::variant<Conv2d, SparseConv2d>;
Tensor apply_conv(Tape& tape, const AnyConv& conv, const Tensor& x);
void init_conv(AnyConv& conv, Rng& rng, double stddev);
void collect_conv(const AnyConv& conv, StateList& out, const std::string& prefix);

/// x + F(x) with F = pad -> conv3 -> norm -> act -> pad -> conv3 -> norm.
/// Reflection padding keeps the spatial extent.
class ResidualBlock {
 public:
  ResidualBlock(AnyConv conv_a, AnyConv conv_b, std::size_t channels, Activation act);

  Tensor forward(Tape& tape, const Tensor& x);
  void init(Rng& rng, double stddev);
  void set_training(bool flag);
  void collect(StateList& out, const std::string& prefix) const;

  AnyConv conv_a;
  AnyConv conv_b;
  InstanceNorm2d norm_a;
  InstanceNorm2d norm_b;
  Activation act;
};

}  // namespace drawcycle
