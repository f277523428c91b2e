#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "quads/tensor.hpp"

// Differentiable primitives. Each one records a tape entry when any input
// requires grad; otherwise the tape is left untouched. Shape violations throw
// quads::Error naming the op and the offending shapes.
namespace quads::ad {

// (m x k) . (k x n) -> (m x n)
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

// Elementwise a + b for equal shapes, or bias add when b is 1-D and matches
// a's last axis. No other broadcasting.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul_scalar(Tape& tape, const Tensor& a, double s);

// Time-major 1-D convolution without padding.
// x: (frames x c_in), w: (c_out x c_in x kernel) -> (out_frames x c_out),
// out_frames = (frames - kernel) / stride + 1.
Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& w, std::size_t stride);

// Exact Gaussian-CDF GELU.
Tensor gelu(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);
Tensor abs(Tape& tape, const Tensor& x);
Tensor log(Tape& tape, const Tensor& x);

// Softmax and log-softmax over the last axis, max-subtracted.
Tensor softmax(Tape& tape, const Tensor& x);
Tensor log_softmax(Tape& tape, const Tensor& x);

Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

// (frames x c) -> (c)
Tensor mean_pool_time(Tape& tape, const Tensor& x);

// Row lookup: table (k x d) -> (m x d), or 1-D table (k) -> (m).
// Backward scatter-adds into the table rows in index order.
Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::uint32_t> indices);

// Stack equal-length 1-D tensors into (m x d).
Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows);

Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

// (b x c) -> (b), out[i] = x[i, cols[i]]
Tensor pick(Tape& tape, const Tensor& x, std::span<const std::size_t> cols);

// Scalar reference GELU, used by the op and by tests.
double gelu_scalar(double x);
double gelu_derivative(double x);

}  // namespace quads::ad
