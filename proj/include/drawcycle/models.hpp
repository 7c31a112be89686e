#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "drawcycle/layers.hpp"

namespace drawcycle {

enum class GeneratorVariant { dense_relu, sparse_kwinners };
enum class DiscriminatorActivation { rrelu, leaky };

std::string to_string(GeneratorVariant v);
GeneratorVariant parse_generator_variant(const std::string& text);
std::string to_string(DiscriminatorActivation a);
DiscriminatorActivation parse_discriminator_activation(const std::string& text);

/// Standard deviation of the Gaussian used for every convolution weight.
inline constexpr double kInitStddev = 0.02;

struct SparsityConfig {
  double weight_sparsity = 0.5;
  double k_fraction = 0.3;
  double boost_strength = 1.5;
  std::size_t duty_period = 1000;
};

struct GeneratorConfig {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t width = 64;
  std::size_t n_res = 12;
  /// Spatial extent the K-Winners unit counts are sized for. Dense
  /// generators accept any extent divisible by 4.
  std::size_t image_size = 64;
  GeneratorVariant variant = GeneratorVariant::sparse_kwinners;
  SparsityConfig sparsity;

  void validate() const;
};

struct DiscriminatorConfig {
  std::size_t in_channels = 1;
  std::size_t width = 64;
  DiscriminatorActivation activation = DiscriminatorActivation::rrelu;
  double leaky_slope = 0.2;
  RReLUConfig rrelu;
  /// Instance norm on layers 1-3. Off gives a purely local patch classifier
  /// whose output crops exactly with its input.
  bool instance_norm = true;

  void validate() const;
};

/// Encoder / residual / decoder translator:
///   c7s1-w, d-2w, d-4w, n_res x r-4w, u-2w, u-w, c7s1-out, tanh.
/// In the sparse variant every encoder and residual convolution is a
/// SparseConv2d and every encoder and residual activation is K-Winners; the
/// decoder stays dense with ReLU.
///
/// Parameters are held through Tensor handles, so copies of a network share
/// storage.
class GeneratorNet {
 public:
  GeneratorNet(const GeneratorConfig& cfg, std::uint64_t seed);

  Tensor forward(Tape& tape, const Tensor& x);
  void set_training(bool flag);
  bool training() const { return training_; }
  /// Re-draws every convolution weight from N(0, 0.02^2); biases 0, norm
  /// gains 1 and shifts 0. Sparsity masks stay fixed and are re-applied.
  void init_weights(std::uint64_t seed);

  StateList state() const;
  std::vector<Tensor> parameters() const { return trainable_tensors(state()); }
  const GeneratorConfig& config() const { return cfg_; }

  std::vector<const KWinners*> kwinners_layers() const;
  std::vector<const SparseConv2d*> sparse_convs() const;

 private:
  struct Stage {
    std::size_t reflect = 0;
    AnyConv conv;
    std::optional<InstanceNorm2d> norm;
    Activation act;
  };
  struct UpStage {
    ConvTranspose2d conv;
    InstanceNorm2d norm;
  };

  GeneratorConfig cfg_;
  std::vector<Stage> encoder_;
  std::vector<ResidualBlock> blocks_;
  std::vector<UpStage> decoder_;
  std::optional<Conv2d> head_;
  bool training_ = true;
};

/// PatchGAN: C(w) s2 -> C(2w) s2 -> C(4w) s2 -> C(8w) s1 -> C(1) s1, all
/// 4x4 with padding 1. Instance norm on the middle three layers. The output
/// is a (B, 1, H', W') map of unbounded logits.
class DiscriminatorNet {
 public:
  DiscriminatorNet(const DiscriminatorConfig& cfg, std::uint64_t seed);

  Tensor forward(Tape& tape, const Tensor& x);
  void set_training(bool flag);
  void init_weights(std::uint64_t seed);

  StateList state() const;
  std::vector<Tensor> parameters() const { return trainable_tensors(state()); }
  const DiscriminatorConfig& config() const { return cfg_; }

  /// Rng states of the RReLU layers (empty for leaky activations).
  std::vector<Rng*> rngs();

  /// Output extent for a square input of the given size; 0 if too small.
  static std::size_t output_extent(std::size_t input);

 private:
  DiscriminatorConfig cfg_;
  std::vector<Conv2d> convs_;
  std::vector<std::optional<InstanceNorm2d>> norms_;
  std::vector<Activation> acts_;
};

GeneratorNet build_generator(const GeneratorConfig& cfg, std::uint64_t seed);
DiscriminatorNet build_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

/// Counts (nonzero, total) weights over the encoder and residual convolutions.
std::pair<std::size_t, std::size_t> encoder_mid_weight_counts(const GeneratorNet& net);

}  // namespace drawcycle
