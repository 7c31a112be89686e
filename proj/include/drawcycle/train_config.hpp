#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "drawcycle/models.hpp"
#include "drawcycle/objectives.hpp"

namespace drawcycle {

/// Every hyperparameter of a training run. Defaults are the full-scale
/// fine-tuned configuration except for the image size, which defaults to the
/// 64x64 desk scale.
struct TrainConfig {
  double lr0 = 0.0002;
  std::size_t epochs_total = 200;
  std::size_t epochs_const = 100;
  double lambda_cyc = 10.0;
  bool idt_enabled = false;
  double idt_weight = 1.0;
  GanMode gan_mode = GanMode::nonsaturating;

  GeneratorVariant variant = GeneratorVariant::sparse_kwinners;
  std::size_t width = 64;
  std::size_t n_res = 12;
  std::size_t d_width = 64;
  DiscriminatorActivation d_activation = DiscriminatorActivation::rrelu;
  SparsityConfig sparsity;

  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t d_steps_per_g = 1;
  std::size_t pool_size = 50;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  std::size_t image_size = 64;
  /// Save a checkpoint every N epochs; 0 saves only after the final epoch.
  std::size_t checkpoint_every = 0;

  void validate() const;

  GeneratorConfig generator_config() const;
  DiscriminatorConfig discriminator_config() const;
};

/// `key = value` lines; '#' starts a comment. Unknown keys, duplicate keys
/// and malformed values are errors.
TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config_file(const std::filesystem::path& path);
/// Canonical text form listing every key; parse_config_text round-trips it.
std::string to_config_text(const TrainConfig& cfg);

/// Full-scale presets: 256x256, width 64, 200 epochs.
TrainConfig preset_baseline();   // identity loss on, dense ReLU generator, 9 blocks
TrainConfig preset_no_idt();     // identity loss off, dense ReLU generator, 9 blocks
TrainConfig preset_finetuned();  // identity loss off, sparse K-Winners generator, 12 blocks

/// Desk-scale counterparts: 64x64, width 16, 20 epochs (10 constant).
/// Residual counts keep the 9 : 12 ratio as 2 : 3.
TrainConfig desk_preset(const TrainConfig& full_preset);

}  // namespace drawcycle
