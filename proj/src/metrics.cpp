#include "drawcycle/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <stdexcept>

namespace drawcycle {

namespace {

void require_same_shape(const GrayImage& a, const GrayImage& b, const char* what) {
  if (a.width != b.width || a.height != b.height) {
    throw std::invalid_argument(std::string(what) + ": image shapes differ (" +
                                std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                                std::to_string(b.width) + "x" + std::to_string(b.height) + ")");
  }
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> w(size * size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  double total = 0;
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const double di = static_cast<double>(i) - c, dj = static_cast<double>(j) - c;
      w[i * size + j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      total += w[i * size + j];
    }
  }
  for (auto& v : w) v /= total;
  return w;
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

double mse(const GrayImage& a, const GrayImage& b) {
  require_same_shape(a, b, "mse");
  if (a.pixels.empty()) throw std::invalid_argument("mse: empty image");
  double s = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    s += d * d;
  }
  return s / static_cast<double>(a.pixels.size());
}

double psnr(double mse_value, double max_value) {
  if (mse_value < 0 || std::isnan(mse_value)) throw std::invalid_argument("psnr: negative mse");
  if (mse_value == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_value * max_value / mse_value);
}

double ssim(const GrayImage& a, const GrayImage& b, const SsimParams& p) {
  require_same_shape(a, b, "ssim");
  if (a.width < p.window || a.height < p.window) {
    throw std::invalid_argument("ssim: image smaller than the " + std::to_string(p.window) +
                                "x" + std::to_string(p.window) + " window");
  }
  const auto w = gaussian_window(p.window, p.sigma);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const std::size_t out_w = a.width - p.window + 1, out_h = a.height - p.window + 1;
  double total = 0;
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      double mu_a = 0, mu_b = 0, saa = 0, sbb = 0, sab = 0;
      for (std::size_t i = 0; i < p.window; ++i) {
        for (std::size_t j = 0; j < p.window; ++j) {
          const double wt = w[i * p.window + j];
          const double va = a.at(ox + j, oy + i), vb = b.at(ox + j, oy + i);
          mu_a += wt * va;
          mu_b += wt * vb;
          saa += wt * va * va;
          sbb += wt * vb * vb;
          sab += wt * va * vb;
        }
      }
      const double var_a = saa - mu_a * mu_a;
      const double var_b = sbb - mu_b * mu_b;
      const double cov = sab - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
    }
  }
  return total / static_cast<double>(out_w * out_h);
}

MetricsReport evaluate_dataset(std::span<const GrayImage> translated,
                               std::span<const GrayImage> reference,
                               std::span<const std::string> ids) {
  if (translated.empty()) throw std::invalid_argument("evaluate: empty image set");
  if (translated.size() != reference.size()) {
    throw std::invalid_argument("evaluate: " + std::to_string(translated.size()) +
                                " translated vs " + std::to_string(reference.size()) +
                                " reference images");
  }
  if (!ids.empty() && ids.size() != translated.size()) {
    throw std::invalid_argument("evaluate: id count does not match image count");
  }
  MetricsReport r;
  r.n_images = translated.size();
  double sum_mse = 0, sum_ssim = 0;
  for (std::size_t i = 0; i < translated.size(); ++i) {
    ImageMetrics m;
    m.id = ids.empty() ? std::to_string(i) : ids[i];
    m.mse = mse(translated[i], reference[i]);
    m.psnr = psnr(m.mse);
    m.ssim = ssim(translated[i], reference[i]);
    sum_mse += m.mse;
    sum_ssim += m.ssim;
    r.per_image.push_back(std::move(m));
  }
  r.mean_mse = sum_mse / static_cast<double>(r.n_images);
  r.mean_ssim = sum_ssim / static_cast<double>(r.n_images);
  r.psnr_from_mean_mse = psnr(r.mean_mse, r.bit_depth_max);
  return r;
}

void write_report_csv(const MetricsReport& report, std::ostream& out) {
  out << "id,mse,psnr,ssim\n";
  for (const auto& m : report.per_image) {
    out << m.id << ',' << fmt("%.17g", m.mse) << ',' << fmt("%.17g", m.psnr) << ','
        << fmt("%.17g", m.ssim) << '\n';
  }
  out << "aggregate," << fmt("%.17g", report.mean_mse) << ','
      << fmt("%.17g", report.psnr_from_mean_mse) << ',' << fmt("%.17g", report.mean_ssim) << '\n';
}

std::string summary_line(const MetricsReport& report) {
  return "PSNR=" + fmt("%.2f", report.psnr_from_mean_mse) + ", SSIM=" +
         fmt("%.2f", 100.0 * report.mean_ssim) + "%, MSE=" + fmt("%.2f", report.mean_mse);
}

TableRowCheck check_table_row(double printed_psnr, double printed_mse, double tolerance) {
  TableRowCheck c{printed_psnr, printed_mse, psnr(printed_mse), 0, false};
  c.deviation = std::abs(c.computed_psnr - printed_psnr);
  c.consistent = c.deviation <= tolerance;
  return c;
}

std::vector<TableRowAudit> audit_table(std::span<const TableRow> rows, double tolerance) {
  std::vector<TableRowAudit> out;
  for (const auto& r : rows) out.push_back({check_table_row(r.psnr, r.mse, tolerance), {}});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) {
      const bool both_higher = rows[i].psnr > rows[j].psnr && rows[i].mse > rows[j].mse;
      const bool both_lower = rows[i].psnr < rows[j].psnr && rows[i].mse < rows[j].mse;
      if (both_higher || both_lower) out[i].ordering_conflicts.push_back(j);
    }
  }
  return out;
}

}  // namespace drawcycle
