#include "drawcycle/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <stdexcept>

namespace drawcycle {

namespace {
std::atomic<std::uint64_t> next_node_id{1};
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

struct Tensor::Impl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty == absent
  bool requires_grad = false;
  std::uint64_t id = next_node_id.fetch_add(1, std::memory_order_relaxed);
};

Tensor::Tensor(Shape shape, bool requires_grad) : impl_(std::make_shared<Impl>()) {
  impl_->data.assign(shape_numel(shape), 0.0);
  impl_->shape = std::move(shape);
  impl_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<Impl>()) {
  if (values.size() != shape_numel(shape)) {
    throw std::invalid_argument("tensor: " + std::to_string(values.size()) +
                                " values do not fill shape " + shape_str(shape));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{1}, {value}, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t(std::move(shape), requires_grad);
  std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
  return t;
}

const Shape& Tensor::shape() const {
  if (!impl_) throw std::logic_error("tensor: undefined tensor");
  return impl_->shape;
}

std::size_t Tensor::extent(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw std::out_of_range("tensor: axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }

std::span<double> Tensor::data() {
  shape();
  return impl_->data;
}

std::span<const double> Tensor::data() const {
  shape();
  return impl_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("tensor: item() on shape " + shape_str(shape()));
  }
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  shape();
  impl_->requires_grad = flag;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  shape();
  return impl_->grad;
}

std::span<double> Tensor::mutable_grad() const {
  shape();
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_ && !impl_->grad.empty()) {
    std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
  }
}

Tensor Tensor::detach() const { return Tensor(shape(), impl_->data, false); }

Tensor Tensor::clone() const {
  return Tensor(shape(), impl_->data, impl_->requires_grad);
}

std::uint64_t Tensor::node_id() const {
  shape();
  return impl_->id;
}

bool Tape::record(Tensor& output, std::initializer_list<Tensor> inputs,
                  BackwardFn backward_fn) {
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Tensor& t) { return t.requires_grad(); });
  if (!any) return false;
  output.set_requires_grad(true);
  entries_.push_back({output, std::move(backward_fn)});
  return true;
}

void Tape::backward(const Tensor& root) {
  if (!root.defined() || root.numel() != 1) {
    throw std::invalid_argument("backward: root must be a scalar tensor");
  }
  const auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) {
    return e.output.same_node(root);
  });
  if (it == entries_.end()) {
    throw std::invalid_argument("backward: root was not recorded on this tape");
  }
  for (auto& e : entries_) {
    auto g = e.output.mutable_grad();
    std::fill(g.begin(), g.end(), 0.0);
  }
  it->output.mutable_grad()[0] = 1.0;
  const auto stop = std::distance(entries_.begin(), it);
  for (auto i = stop; i >= 0; --i) entries_[static_cast<std::size_t>(i)].backward_fn();
}

void Tape::clear() { entries_.clear(); }

void zero_grad(std::span<Tensor> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace drawcycle
