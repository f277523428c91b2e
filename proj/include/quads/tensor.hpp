#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace quads::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major fp64 array with an optional gradient buffer. Tensor is a
// cheap handle: copies alias the same storage. Values never change after
// construction; only the gradient buffer is mutable.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return storage_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t numel() const;

  std::span<const double> data() const;
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad() const;

  // Same values, no gradient tracking, fresh storage.
  Tensor detach() const;

  // Gradient buffer, zero-initialised on first access. Used by backward rules.
  std::span<double> grad_buffer() const;

  // Identity of the underlying storage; stable for the tensor's lifetime.
  const void* identity() const { return storage_.get(); }

 private:
  struct Storage {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Storage> storage_;
};

// Ordered record of primitive applications. Entries are appended in
// evaluation order, so reverse iteration is a valid topological order.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& output)>;

  void record(std::string_view op, std::vector<Tensor> inputs, Tensor output, BackwardFn rule);

  // Seeds d(root)/d(root) = 1 and replays every entry once in reverse.
  // Rejects non-scalar roots and a second call without reset().
  void backward(const Tensor& root);

  void reset();

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  std::vector<std::string_view> ops() const;

 private:
  struct Entry {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn rule;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

}  // namespace quads::ad
