#include "quads/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "quads/error.hpp"

namespace quads::ad {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw Error("tensor: shape " + shape_string(shape) + " does not hold " +
                std::to_string(data.size()) + " values");
  }
  storage_ = std::make_shared<Storage>();
  storage_->shape = std::move(shape);
  storage_->data = std::move(data);
  storage_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  Shape shape{values.size()};
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

static void require_defined(const void* p) {
  if (p == nullptr) throw Error("tensor: use of an undefined tensor");
}

const Shape& Tensor::shape() const {
  require_defined(storage_.get());
  return storage_->shape;
}

std::size_t Tensor::numel() const {
  require_defined(storage_.get());
  return storage_->data.size();
}

std::span<const double> Tensor::data() const {
  require_defined(storage_.get());
  return storage_->data;
}

double Tensor::item() const {
  if (numel() != 1) throw Error("tensor: item() on non-scalar " + shape_string(shape()));
  return storage_->data[0];
}

bool Tensor::requires_grad() const { return storage_ && storage_->requires_grad; }

bool Tensor::has_grad() const { return storage_ && !storage_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  require_defined(storage_.get());
  return storage_->grad;
}

void Tensor::zero_grad() const {
  require_defined(storage_.get());
  storage_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(shape(), storage_->data, false); }

std::span<double> Tensor::grad_buffer() const {
  require_defined(storage_.get());
  if (storage_->grad.empty()) storage_->grad.assign(storage_->data.size(), 0.0);
  return storage_->grad;
}

void Tape::record(std::string_view op, std::vector<Tensor> inputs, Tensor output, BackwardFn rule) {
  if (consumed_) throw Error("tape: recording into a consumed tape; call reset() first");
  entries_.push_back(Entry{op, std::move(inputs), std::move(output), std::move(rule)});
}

void Tape::backward(const Tensor& root) {
  if (consumed_) throw Error("tape: backward called twice without reset()");
  if (!root.defined() || root.numel() != 1) {
    throw Error("tape: backward root must be a scalar, got " +
                (root.defined() ? shape_string(root.shape()) : std::string("undefined")));
  }
  if (!root.requires_grad()) throw Error("tape: backward root does not require grad");
  consumed_ = true;
  root.grad_buffer()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->rule(it->output);
  }
}

void Tape::reset() {
  entries_.clear();
  consumed_ = false;
}

std::vector<std::string_view> Tape::ops() const {
  std::vector<std::string_view> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.op);
  return out;
}

}  // namespace quads::ad
