#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "drawcycle/metrics.hpp"
#include "drawcycle/training.hpp"

namespace drawcycle {

namespace fs = std::filesystem;

struct SynthOptions {
  fs::path out;
  std::size_t size = 64;
  std::size_t train = 40;
  std::size_t test = 10;
  std::uint64_t seed = 1;
};
void cmd_synth(const SynthOptions& opt, std::ostream& log);

/// Everything needed to reproduce a training run.
struct RunManifest {
  std::string config_text;
  std::uint64_t seed = 0;
  std::string started;   // UTC, ISO 8601
  std::string finished;  // UTC, ISO 8601
  std::size_t epochs_completed = 0;
  std::string data_dir;
  std::vector<std::string> checkpoints;
  std::vector<std::string> outputs;

  std::string to_text() const;
};
/// Writes via a temporary file and rename.
void write_manifest(const RunManifest& manifest, const fs::path& path);

struct TrainOptions {
  fs::path data;
  fs::path config;
  fs::path out;
  /// Continue from this checkpoint instead of starting fresh.
  fs::path resume;
};
RunManifest cmd_train(const TrainOptions& opt, std::ostream& log);

enum class Direction { x2y, y2x };
Direction parse_direction(const std::string& text);

struct TranslateOptions {
  fs::path ckpt;
  fs::path in;
  fs::path out;
  Direction direction = Direction::x2y;
  /// When set, the checkpoint's shapes must match this config.
  fs::path config;
};
/// Returns the number of images written.
std::size_t cmd_translate(const TranslateOptions& opt, std::ostream& log);

struct EvaluateOptions {
  fs::path translated;
  fs::path reference;
  fs::path out;
};
MetricsReport cmd_evaluate(const EvaluateOptions& opt, std::ostream& log);

struct CurvesOptions {
  fs::path losses;
  fs::path out;
  /// Subset of loss columns to plot; empty plots all.
  std::vector<std::string> columns;
};
void cmd_curves(const CurvesOptions& opt, std::ostream& log);

/// Parsed losses.csv: column names (without "epoch") and per-column series.
/// Empty cells (idt when disabled) are skipped.
struct LossTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::pair<double, double>>> series;  // (epoch, value)
  std::size_t rows = 0;
};
LossTable parse_losses_csv(const std::string& text);
std::string render_curves_svg(const LossTable& table, const std::vector<std::string>& columns);

struct RobustnessOptions {
  fs::path sparse_ckpt;
  fs::path dense_ckpt;
  fs::path images;  // directory of domain-X PGMs
  double sigma = 0.1;
  std::uint64_t seed = 7;
  fs::path out;  // optional CSV
};
struct RobustnessRow {
  std::string model;
  std::string variant;
  double mean_l1 = 0;
  std::size_t n_images = 0;
};
/// Mean |G(x + noise) - G(x)| per model, on the [-1, 1] tensor scale.
std::vector<RobustnessRow> cmd_robustness(const RobustnessOptions& opt, std::ostream& log);
/// Same measurement for an in-memory generator.
double noise_l1_deviation(GeneratorNet& g, const std::vector<GrayImage>& images, double sigma,
                          std::uint64_t seed);

}  // namespace drawcycle
