#pragma once

#include <cstddef>

#include "drawcycle/tensor.hpp"

namespace drawcycle {

enum class BinaryKind { add, sub, mul };
enum class UnaryKind { neg, abs, log, tanh, sigmoid, softplus };
enum class ReduceKind { mean, sum };

/// Elementwise a (op) b. `b` may also be a single-element tensor, which is
/// broadcast against every element of `a`.
Tensor ew_binary(Tape& tape, const Tensor& a, const Tensor& b, BinaryKind kind);
Tensor ew_unary(Tape& tape, const Tensor& a, UnaryKind kind);
Tensor reduce(Tape& tape, const Tensor& a, ReduceKind kind);

inline Tensor add(Tape& t, const Tensor& a, const Tensor& b) { return ew_binary(t, a, b, BinaryKind::add); }
inline Tensor sub(Tape& t, const Tensor& a, const Tensor& b) { return ew_binary(t, a, b, BinaryKind::sub); }
inline Tensor mul(Tape& t, const Tensor& a, const Tensor& b) { return ew_binary(t, a, b, BinaryKind::mul); }
inline Tensor neg(Tape& t, const Tensor& a) { return ew_unary(t, a, UnaryKind::neg); }
inline Tensor abs(Tape& t, const Tensor& a) { return ew_unary(t, a, UnaryKind::abs); }
inline Tensor log(Tape& t, const Tensor& a) { return ew_unary(t, a, UnaryKind::log); }
inline Tensor tanh(Tape& t, const Tensor& a) { return ew_unary(t, a, UnaryKind::tanh); }
inline Tensor sigmoid(Tape& t, const Tensor& a) { return ew_unary(t, a, UnaryKind::sigmoid); }
inline Tensor softplus(Tape& t, const Tensor& a) { return ew_unary(t, a, UnaryKind::softplus); }
inline Tensor mean(Tape& t, const Tensor& a) { return reduce(t, a, ReduceKind::mean); }
inline Tensor sum(Tape& t, const Tensor& a) { return reduce(t, a, ReduceKind::sum); }

/// a * factor for a constant factor.
Tensor scale(Tape& tape, const Tensor& a, double factor);

/// Numerically stable ln(1 + e^x).
double softplus_value(double x);

/// Cross-correlation. input (B, I, H, W), weight (O, I, K, K), bias (O) or
/// undefined. Zero padding.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding);

/// Fractionally-strided convolution, the adjoint of conv2d with the same
/// weight. input (B, O, H, W), weight (O, I, K, K), bias (I) or undefined.
/// Output extent is (H - 1) * stride - 2 * padding + K.
Tensor conv_transpose2d(Tape& tape, const Tensor& input, const Tensor& weight,
                        const Tensor& bias, std::size_t stride, std::size_t padding);

/// Mirror padding without edge repetition; requires pad < min(H, W).
Tensor reflect_pad(Tape& tape, const Tensor& input, std::size_t pad);

}  // namespace drawcycle
