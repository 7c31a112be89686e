#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace drawcycle {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor of 64-bit reals with an optional gradient buffer.
///
/// Tensor is a handle: copies share the same storage, the way parameters are
/// shared between a network and the optimizer that updates them. Use clone()
/// or detach() for an independent copy.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t numel() const;

  std::span<double> data();
  std::span<const double> data() const;
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<const double> grad() const;
  /// Gradient buffer, allocated (zero-filled) on first access.
  std::span<double> mutable_grad() const;
  void zero_grad();

  /// Copy of the values with no gradient history.
  Tensor detach() const;
  /// Independent copy of values; keeps requires_grad.
  Tensor clone() const;

  std::uint64_t node_id() const;
  bool same_node(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

/// Define-by-run record of differentiable operations.
///
/// Operations append an entry only when at least one input requires a
/// gradient. Entries are stored in execution order, so replaying them in
/// reverse is a valid topological order for reverse-mode differentiation.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Records `output` as produced from `inputs`. Returns false (and records
  /// nothing) if no input requires a gradient.
  bool record(Tensor& output, std::initializer_list<Tensor> inputs,
              BackwardFn backward_fn);

  /// Accumulates d(root)/d(leaf) into every reachable leaf that requires a
  /// gradient. Intermediate gradients are recomputed from scratch on every
  /// call; leaf gradients accumulate until zero_grad().
  void backward(const Tensor& root);

  void clear();
  std::size_t size() const { return entries_.size(); }

 private:
  struct Entry {
    Tensor output;
    BackwardFn backward_fn;
  };
  std::vector<Entry> entries_;
};

void zero_grad(std::span<Tensor> params);

}  // namespace drawcycle
