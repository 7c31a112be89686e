#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "drawcycle/image.hpp"

namespace drawcycle {

inline constexpr double kPixelMax = 255.0;

/// Mean squared pixel error on the 0-255 scale.
double mse(const GrayImage& a, const GrayImage& b);

/// 10 * log10(max^2 / mse) in dB; +infinity when mse == 0.
double psnr(double mse_value, double max_value = kPixelMax);

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = kPixelMax;
};

/// Mean structural similarity over all fully contained (valid) windows of a
/// normalized Gaussian weighting window.
double ssim(const GrayImage& a, const GrayImage& b, const SsimParams& params = {});

struct ImageMetrics {
  std::string id;
  double mse = 0;
  double psnr = 0;
  double ssim = 0;
};

struct MetricsReport {
  std::vector<ImageMetrics> per_image;
  double mean_mse = 0;
  /// PSNR of the mean MSE, the convention used by the aggregate tables.
  double psnr_from_mean_mse = 0;
  double mean_ssim = 0;
  std::size_t n_images = 0;
  double bit_depth_max = kPixelMax;
};

MetricsReport evaluate_dataset(std::span<const GrayImage> translated,
                               std::span<const GrayImage> reference,
                               std::span<const std::string> ids = {});

/// CSV with header id,mse,psnr,ssim, one row per image and a final
/// "aggregate" row.
void write_report_csv(const MetricsReport& report, std::ostream& out);
/// "PSNR=..., SSIM=...%, MSE=..."
std::string summary_line(const MetricsReport& report);

/// A printed (PSNR, MSE) table row checked against psnr(mse).
struct TableRowCheck {
  double printed_psnr;
  double printed_mse;
  double computed_psnr;
  double deviation;  // |computed - printed|
  bool consistent;
};

TableRowCheck check_table_row(double printed_psnr, double printed_mse, double tolerance = 0.01);

struct TableRow {
  double psnr;
  double mse;
};

/// A row is flagged when it fails psnr(mse) or when another row of the same
/// table pairs a higher PSNR with a higher MSE (PSNR is strictly decreasing
/// in MSE, so at least one of the two is misprinted).
struct TableRowAudit {
  TableRowCheck identity;
  std::vector<std::size_t> ordering_conflicts;  // indices of conflicting rows
  bool flagged() const { return !identity.consistent || !ordering_conflicts.empty(); }
};

std::vector<TableRowAudit> audit_table(std::span<const TableRow> rows, double tolerance = 0.01);

}  // namespace drawcycle
