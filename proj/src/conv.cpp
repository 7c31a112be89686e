#include <Eigen/Core>

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "drawcycle/ops.hpp"

namespace drawcycle {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
  std::size_t channels, height, width;  // image side
  std::size_t kernel, stride, padding;
  std::size_t out_h, out_w;             // column side

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

// Unfolds one C x H x W plane stack into a (C*K*K) x (Ho*Wo) matrix.
void im2col(const ConvGeometry& g, const double* image, double* col) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj, ++row) {
        double* dst = col + row * g.cols();
        for (std::size_t oi = 0; oi < g.out_h; ++oi) {
          const auto ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - pad;
          double* drow = dst + oi * g.out_w;
          if (ii < 0 || ii >= h) {
            std::fill(drow, drow + g.out_w, 0.0);
            continue;
          }
          const double* srow = plane + ii * w;
          for (std::size_t oj = 0; oj < g.out_w; ++oj) {
            const auto jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - pad;
            drow[oj] = (jj < 0 || jj >= w) ? 0.0 : srow[jj];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds the matrix back onto the image.
void col2im(const ConvGeometry& g, const double* col, double* image) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  const auto h = static_cast<std::ptrdiff_t>(g.height);
  const auto w = static_cast<std::ptrdiff_t>(g.width);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = image + c * g.height * g.width;
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj, ++row) {
        const double* src = col + row * g.cols();
        for (std::size_t oi = 0; oi < g.out_h; ++oi) {
          const auto ii = static_cast<std::ptrdiff_t>(oi * g.stride + ki) - pad;
          if (ii < 0 || ii >= h) continue;
          double* drow = plane + ii * w;
          const double* srow = src + oi * g.out_w;
          for (std::size_t oj = 0; oj < g.out_w; ++oj) {
            const auto jj = static_cast<std::ptrdiff_t>(oj * g.stride + kj) - pad;
            if (jj >= 0 && jj < w) drow[jj] += srow[oj];
          }
        }
      }
    }
  }
}

void check_conv_args(const char* op, const Tensor& input, const Tensor& weight,
                     const Tensor& bias, std::size_t bias_len, std::size_t stride) {
  if (input.dim() != 4) throw std::invalid_argument(std::string(op) + ": expected BCHW input");
  if (weight.dim() != 4 || weight.extent(2) != weight.extent(3)) {
    throw std::invalid_argument(std::string(op) + ": expected square (O, I, K, K) weight, got " +
                                shape_str(weight.shape()));
  }
  if (stride == 0) throw std::invalid_argument(std::string(op) + ": stride must be positive");
  if (bias.defined() && (bias.dim() != 1 || bias.extent(0) != bias_len)) {
    throw std::invalid_argument(std::string(op) + ": bias shape " + shape_str(bias.shape()) +
                                " does not match " + std::to_string(bias_len) + " channels");
  }
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding) {
  check_conv_args("conv2d", input, weight, bias, weight.dim() == 4 ? weight.extent(0) : 0, stride);
  const std::size_t batch = input.extent(0), in_c = input.extent(1);
  const std::size_t out_c = weight.extent(0), k = weight.extent(2);
  if (weight.extent(1) != in_c) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(in_c) +
                                " channels, weight expects " + std::to_string(weight.extent(1)));
  }
  const std::size_t ph = input.extent(2) + 2 * padding, pw = input.extent(3) + 2 * padding;
  if (ph < k || pw < k) {
    throw std::invalid_argument("conv2d: kernel " + std::to_string(k) +
                                " does not fit padded input " + shape_str(input.shape()));
  }
  const ConvGeometry g{in_c, input.extent(2), input.extent(3), k, stride, padding,
                       (ph - k) / stride + 1, (pw - k) / stride + 1};

  auto cols = std::make_shared<std::vector<double>>(batch * g.rows() * g.cols());
  Tensor out(Shape{batch, out_c, g.out_h, g.out_w});
  const ConstMatMap w(weight.data().data(), out_c, g.rows());
  const auto x = input.data();
  auto o = out.data();
  for (std::size_t b = 0; b < batch; ++b) {
    double* col = cols->data() + b * g.rows() * g.cols();
    im2col(g, x.data() + b * in_c * g.height * g.width, col);
    MatMap ob(o.data() + b * out_c * g.cols(), out_c, g.cols());
    ob.noalias() = w * ConstMatMap(col, g.rows(), g.cols());
    if (bias.defined()) {
      const auto bv = bias.data();
      for (std::size_t c = 0; c < out_c; ++c) ob.row(c).array() += bv[c];
    }
  }

  tape.record(out, {input, weight, bias}, [input, weight, bias, out, cols, g, batch, out_c]() mutable {
    const auto gout = out.grad();
    const std::size_t plane = g.cols();
    if (bias.requires_grad()) {
      auto gb = bias.mutable_grad();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < out_c; ++c) {
          const double* p = gout.data() + (b * out_c + c) * plane;
          double s = 0;
          for (std::size_t i = 0; i < plane; ++i) s += p[i];
          gb[c] += s;
        }
      }
    }
    if (weight.requires_grad()) {
      MatMap gw(weight.mutable_grad().data(), out_c, g.rows());
      for (std::size_t b = 0; b < batch; ++b) {
        const ConstMatMap gb(gout.data() + b * out_c * plane, out_c, plane);
        const ConstMatMap col(cols->data() + b * g.rows() * plane, g.rows(), plane);
        gw.noalias() += gb * col.transpose();
      }
    }
    if (input.requires_grad()) {
      const ConstMatMap w(weight.data().data(), out_c, g.rows());
      auto gi = input.mutable_grad();
      RowMatrix dcol(g.rows(), plane);
      for (std::size_t b = 0; b < batch; ++b) {
        const ConstMatMap gb(gout.data() + b * out_c * plane, out_c, plane);
        dcol.noalias() = w.transpose() * gb;
        col2im(g, dcol.data(), gi.data() + b * g.channels * g.height * g.width);
      }
    }
  });
  return out;
}

Tensor conv_transpose2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
                        std::size_t stride, std::size_t padding) {
  check_conv_args("conv_transpose2d", input, weight, bias,
                  weight.dim() == 4 ? weight.extent(1) : 0, stride);
  const std::size_t batch = input.extent(0), in_c = input.extent(1);
  const std::size_t out_c = weight.extent(1), k = weight.extent(2);
  if (weight.extent(0) != in_c) {
    throw std::invalid_argument("conv_transpose2d: input has " + std::to_string(in_c) +
                                " channels, weight expects " + std::to_string(weight.extent(0)));
  }
  const std::size_t h = input.extent(2), w_in = input.extent(3);
  const std::size_t full_h = (h - 1) * stride + k, full_w = (w_in - 1) * stride + k;
  if (full_h <= 2 * padding || full_w <= 2 * padding) {
    throw std::invalid_argument("conv_transpose2d: empty output for input " +
                                shape_str(input.shape()));
  }
  // Geometry of the forward convolution this operator is the adjoint of.
  const ConvGeometry g{out_c, full_h - 2 * padding, full_w - 2 * padding, k, stride, padding, h, w_in};
  const std::size_t plane_in = g.cols();
  const std::size_t plane_out = g.height * g.width;

  Tensor out(Shape{batch, out_c, g.height, g.width});
  const ConstMatMap wm(weight.data().data(), in_c, g.rows());
  const auto x = input.data();
  auto o = out.data();
  RowMatrix col(g.rows(), plane_in);
  for (std::size_t b = 0; b < batch; ++b) {
    col.noalias() = wm.transpose() * ConstMatMap(x.data() + b * in_c * plane_in, in_c, plane_in);
    col2im(g, col.data(), o.data() + b * out_c * plane_out);
    if (bias.defined()) {
      const auto bv = bias.data();
      for (std::size_t c = 0; c < out_c; ++c) {
        double* p = o.data() + (b * out_c + c) * plane_out;
        for (std::size_t i = 0; i < plane_out; ++i) p[i] += bv[c];
      }
    }
  }

  tape.record(out, {input, weight, bias}, [input, weight, bias, out, g, batch, in_c, out_c, plane_in,
                                           plane_out]() mutable {
    const auto gout = out.grad();
    if (bias.requires_grad()) {
      auto gb = bias.mutable_grad();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t c = 0; c < out_c; ++c) {
          const double* p = gout.data() + (b * out_c + c) * plane_out;
          double s = 0;
          for (std::size_t i = 0; i < plane_out; ++i) s += p[i];
          gb[c] += s;
        }
      }
    }
    if (!weight.requires_grad() && !input.requires_grad()) return;
    RowMatrix gcol(g.rows(), plane_in);
    const ConstMatMap wm(weight.data().data(), in_c, g.rows());
    for (std::size_t b = 0; b < batch; ++b) {
      im2col(g, gout.data() + b * out_c * plane_out, gcol.data());
      if (weight.requires_grad()) {
        MatMap gw(weight.mutable_grad().data(), in_c, g.rows());
        const ConstMatMap xb(input.data().data() + b * in_c * plane_in, in_c, plane_in);
        gw.noalias() += xb * gcol.transpose();
      }
      if (input.requires_grad()) {
        MatMap gi(input.mutable_grad().data() + b * in_c * plane_in, in_c, plane_in);
        gi.noalias() += wm * gcol;
      }
    }
  });
  return out;
}

}  // namespace drawcycle
