#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "drawcycle/image.hpp"
#include "drawcycle/models.hpp"
#include "drawcycle/objectives.hpp"
#include "drawcycle/random.hpp"
#include "drawcycle/train_config.hpp"

namespace drawcycle {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch);

struct AdamHyper {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  /// Zero moments shaped like `params`.
  static AdamState for_params(std::span<const Tensor> params);
};

/// One bias-corrected Adam update using each parameter's accumulated
/// gradient (a parameter without a gradient buffer counts as zero gradient).
void adam_step(std::span<Tensor> params, AdamState& state, const AdamHyper& hyper, double lr);

/// History buffer of generated images shown to a discriminator.
class ImagePool {
 public:
  ImagePool(std::size_t capacity, std::uint64_t seed);

  /// `fresh` is a single image (1, C, H, W). The result is detached.
  Tensor query(const Tensor& fresh);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return images_.size(); }
  const std::vector<Tensor>& images() const { return images_; }
  std::vector<Tensor>& images() { return images_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }

 private:
  std::size_t capacity_;
  std::vector<Tensor> images_;
  Rng rng_;
};

struct CycleGanNets {
  GeneratorNet g_xy;
  GeneratorNet g_yx;
  DiscriminatorNet d_x;
  DiscriminatorNet d_y;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  LossBundle losses;      // per-step means
  double seconds = 0;
};

/// The generator objective of one batch, built on a tape without updating
/// anything. Forward passes still advance duty cycles and RReLU streams.
struct GeneratorObjective {
  LossBundle values;  // discriminator fields left at 0
  Tensor total;
  Tensor fake_x;  // G_yx(y)
  Tensor fake_y;  // G_xy(x)
};
GeneratorObjective generator_objective(Tape& tape, CycleGanNets& nets, const TrainConfig& cfg,
                                       const Tensor& x, const Tensor& y);

/// Unpaired training images of both domains.
struct TrainData {
  std::vector<GrayImage> x;
  std::vector<GrayImage> y;
};

/// The full mutable state of a run: networks, optimizers, pools, shuffling
/// streams and progress counters.
class Trainer {
 public:
  explicit Trainer(const TrainConfig& cfg);

  /// One generator update followed by d_steps_per_g updates of each
  /// discriminator. x and y are (B, 1, S, S) batches.
  LossBundle train_step(const Tensor& x, const Tensor& y, double lr);

  /// One pass over max(|X|, |Y|) / batch_size steps with independently
  /// shuffled domains.
  EpochRecord run_epoch(const TrainData& data);

  using EpochCallback = std::function<void(const EpochRecord&, Trainer&)>;
  /// Runs the remaining epochs up to epochs_total.
  std::vector<EpochRecord> run(const TrainData& data, const EpochCallback& on_epoch = {});

  void save_checkpoint(const std::filesystem::path& path) const;
  /// Restores every tensor and RNG state. The file's shapes must match this
  /// trainer's configuration.
  void load_checkpoint(const std::filesystem::path& path);

  const TrainConfig& config() const { return cfg_; }
  CycleGanNets& nets() { return nets_; }
  const CycleGanNets& nets() const { return nets_; }
  std::size_t epochs_done() const { return epochs_done_; }
  std::uint64_t global_step() const { return global_step_; }
  const AdamState& adam_g() const { return adam_g_; }

  /// Every named tensor that a checkpoint carries.
  StateList full_state() const;

 private:
  void check_finite(double value, const char* term) const;
  Tensor discriminator_step(DiscriminatorNet& d, std::vector<Tensor>& params, AdamState& adam,
                            const Tensor& real, const Tensor& fake, double lr);

  TrainConfig cfg_;
  AdamHyper hyper_;
  CycleGanNets nets_;
  std::vector<Tensor> g_params_, dx_params_, dy_params_;
  AdamState adam_g_, adam_dx_, adam_dy_;
  ImagePool pool_x_, pool_y_;
  Rng shuffle_x_, shuffle_y_;
  std::size_t epochs_done_ = 0;
  std::uint64_t global_step_ = 0;
};

/// Config text stored in a checkpoint header.
TrainConfig read_checkpoint_config(const std::filesystem::path& path);

/// Runs a fresh trainer through epochs_total epochs. Throws
/// std::invalid_argument on an empty domain.
struct TrainResult {
  Trainer trainer;
  std::vector<EpochRecord> history;
};
TrainResult train_run(const TrainConfig& cfg, const TrainData& data,
                      const Trainer::EpochCallback& on_epoch = {});

/// Header plus one row per record; fields printed with %.17g, idt empty
/// when identity loss is off.
void write_losses_csv(std::span<const EpochRecord> history, std::ostream& out);
std::string losses_csv_header();
std::string losses_csv_row(const EpochRecord& record);

}  // namespace drawcycle
