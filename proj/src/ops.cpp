#include "quads/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "quads/error.hpp"

namespace quads::ad {
namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw Error(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
              shape_string(b.shape()));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const std::string& expected) {
  throw Error(std::string(op) + ": bad input shape " + shape_string(a.shape()) + ", expected " +
              expected);
}

bool any_grad(const Tensor& a) { return a.requires_grad(); }
bool any_grad(const Tensor& a, const Tensor& b) { return a.requires_grad() || b.requires_grad(); }

// Applies an elementwise map whose derivative only needs the input value.
template <typename F, typename D>
Tensor unary(Tape& tape, const char* op, const Tensor& x, F f, D df) {
  const auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  Tensor y(x.shape(), std::move(out), any_grad(x));
  if (y.requires_grad()) {
    tape.record(op, {x}, y, [x, df](const Tensor& y) {
      const auto g = y.grad();
      const auto v = x.data();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(v[i]);
    });
  }
  return y;
}

}  // namespace

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_error("matmul", a, b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> C(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[i * k + p];
      const double* brow = &B[p * n];
      double* crow = &C[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  Tensor c({m, n}, std::move(C), any_grad(a, b));
  if (c.requires_grad()) {
    tape.record("matmul", {a, b}, c, [a, b, m, k, n](const Tensor& c) {
      const auto G = c.grad();
      const auto A = a.data();
      const auto B = b.data();
      if (a.requires_grad()) {
        auto GA = a.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
            GA[i * k + p] += acc;
          }
      }
      if (b.requires_grad()) {
        auto GB = b.grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) GB[p * n + j] += av * G[i * n + j];
          }
      }
    });
  }
  return c;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  const bool same = a.shape() == b.shape();
  const bool bias = !same && b.rank() == 1 && a.rank() >= 1 && a.shape().back() == b.dim(0);
  if (!same && !bias) shape_error("add", a, b);
  const auto A = a.data();
  const auto B = b.data();
  const std::size_t width = B.size();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] + B[same ? i : i % width];
  Tensor y(a.shape(), std::move(out), any_grad(a, b));
  if (y.requires_grad()) {
    tape.record("add", {a, b}, y, [a, b, same, width](const Tensor& y) {
      const auto G = y.grad();
      if (a.requires_grad()) {
        auto GA = a.grad_buffer();
        for (std::size_t i = 0; i < G.size(); ++i) GA[i] += G[i];
      }
      if (b.requires_grad()) {
        auto GB = b.grad_buffer();
        for (std::size_t i = 0; i < G.size(); ++i) GB[same ? i : i % width] += G[i];
      }
    });
  }
  return y;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a, b);
  const auto A = a.data();
  const auto B = b.data();
  std::vector<double> out(A.size());
  for (std::size_t i = 0; i < A.size(); ++i) out[i] = A[i] - B[i];
  Tensor y(a.shape(), std::move(out), any_grad(a, b));
  if (y.requires_grad()) {
    tape.record("sub", {a, b}, y, [a, b](const Tensor& y) {
      const auto G = y.grad();
      if (a.requires_grad()) {
        auto GA = a.grad_buffer();
        for (std::size_t i = 0; i < G.size(); ++i) GA[i] += G[i];
      }
      if (b.requires_grad()) {
        auto GB = b.grad_buffer();
        for (std::size_t i = 0; i < G.size(); ++i) GB[i] -= G[i];
      }
    });
  }
  return y;
}

Tensor mul_scalar(Tape& tape, const Tensor& a, double s) {
  return unary(tape, "mul_scalar", a, [s](double v) { return v * s; }, [s](double) { return s; });
}

Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& w, std::size_t stride) {
  if (x.rank() != 2 || w.rank() != 3 || w.dim(1) != x.dim(1)) shape_error("conv1d", x, w);
  if (stride == 0) throw Error("conv1d: stride must be positive");
  const std::size_t frames = x.dim(0), c_in = x.dim(1), c_out = w.dim(0), kernel = w.dim(2);
  if (kernel == 0 || frames < kernel) shape_error("conv1d", x, w);
  const std::size_t out_frames = (frames - kernel) / stride + 1;

  // wt[k][c][o] so the innermost loop runs over contiguous output channels.
  const auto W = w.data();
  std::vector<double> wt(W.size());
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t c = 0; c < c_in; ++c)
      for (std::size_t k = 0; k < kernel; ++k)
        wt[(k * c_in + c) * c_out + o] = W[(o * c_in + c) * kernel + k];

  const auto X = x.data();
  std::vector<double> Y(out_frames * c_out, 0.0);
  for (std::size_t t = 0; t < out_frames; ++t) {
    double* yrow = &Y[t * c_out];
    for (std::size_t k = 0; k < kernel; ++k) {
      const double* xrow = &X[(t * stride + k) * c_in];
      for (std::size_t c = 0; c < c_in; ++c) {
        const double xv = xrow[c];
        const double* wrow = &wt[(k * c_in + c) * c_out];
        for (std::size_t o = 0; o < c_out; ++o) yrow[o] += xv * wrow[o];
      }
    }
  }
  Tensor y({out_frames, c_out}, std::move(Y), any_grad(x, w));
  if (y.requires_grad()) {
    tape.record("conv1d", {x, w}, y,
                [x, w, wt = std::move(wt), stride, out_frames, c_in, c_out, kernel](const Tensor& y) {
                  const auto G = y.grad();
                  const auto X = x.data();
                  if (x.requires_grad()) {
                    auto GX = x.grad_buffer();
                    for (std::size_t t = 0; t < out_frames; ++t)
                      for (std::size_t k = 0; k < kernel; ++k)
                        for (std::size_t c = 0; c < c_in; ++c) {
                          const double* wrow = &wt[(k * c_in + c) * c_out];
                          double acc = 0.0;
                          for (std::size_t o = 0; o < c_out; ++o) acc += G[t * c_out + o] * wrow[o];
                          GX[(t * stride + k) * c_in + c] += acc;
                        }
                  }
                  if (w.requires_grad()) {
                    std::vector<double> gwt(wt.size(), 0.0);
                    for (std::size_t t = 0; t < out_frames; ++t)
                      for (std::size_t k = 0; k < kernel; ++k)
                        for (std::size_t c = 0; c < c_in; ++c) {
                          const double xv = X[(t * stride + k) * c_in + c];
                          double* grow = &gwt[(k * c_in + c) * c_out];
                          for (std::size_t o = 0; o < c_out; ++o) grow[o] += xv * G[t * c_out + o];
                        }
                    auto GW = w.grad_buffer();
                    for (std::size_t o = 0; o < c_out; ++o)
                      for (std::size_t c = 0; c < c_in; ++c)
                        for (std::size_t k = 0; k < kernel; ++k)
                          GW[(o * c_in + c) * kernel + k] += gwt[(k * c_in + c) * c_out + o];
                  }
                });
  }
  return y;
}

Tensor gelu(Tape& tape, const Tensor& x) {
  return unary(tape, "gelu", x, gelu_scalar, gelu_derivative);
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(
      tape, "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(Tape& tape, const Tensor& x) {
  return unary(
      tape, "abs", x, [](double v) { return std::fabs(v); },
      [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor log(Tape& tape, const Tensor& x) {
  for (double v : x.data())
    if (!(v > 0.0)) throw Error("log: input must be strictly positive");
  return unary(
      tape, "log", x, [](double v) { return std::log(v); }, [](double v) { return 1.0 / v; });
}

Tensor softmax(Tape& tape, const Tensor& x) {
  if (x.rank() < 1 || x.shape().back() == 0) shape_error("softmax", x, "rank >= 1, non-empty last axis");
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  const auto X = x.data();
  std::vector<double> Y(X.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &X[r * width];
    double* yr = &Y[r * width];
    const double mx = *std::max_element(xr, xr + width);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) total += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < width; ++j) yr[j] /= total;
  }
  Tensor y(x.shape(), std::move(Y), any_grad(x));
  if (y.requires_grad()) {
    tape.record("softmax", {x}, y, [x, rows, width](const Tensor& y) {
      const auto G = y.grad();
      const auto S = y.data();
      auto GX = x.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < width; ++j) dot += G[r * width + j] * S[r * width + j];
        for (std::size_t j = 0; j < width; ++j)
          GX[r * width + j] += S[r * width + j] * (G[r * width + j] - dot);
      }
    });
  }
  return y;
}

Tensor log_softmax(Tape& tape, const Tensor& x) {
  if (x.rank() < 1 || x.shape().back() == 0)
    shape_error("log_softmax", x, "rank >= 1, non-empty last axis");
  const std::size_t width = x.shape().back();
  const std::size_t rows = x.numel() / width;
  const auto X = x.data();
  std::vector<double> Y(X.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &X[r * width];
    const double mx = *std::max_element(xr, xr + width);
    double total = 0.0;
    for (std::size_t j = 0; j < width; ++j) total += std::exp(xr[j] - mx);
    const double log_total = std::log(total);
    for (std::size_t j = 0; j < width; ++j) Y[r * width + j] = (xr[j] - mx) - log_total;
  }
  Tensor y(x.shape(), std::move(Y), any_grad(x));
  if (y.requires_grad()) {
    tape.record("log_softmax", {x}, y, [x, rows, width](const Tensor& y) {
      const auto G = y.grad();
      const auto L = y.data();
      auto GX = x.grad_buffer();
      for (std::size_t r = 0; r < rows; ++r) {
        double gsum = 0.0;
        for (std::size_t j = 0; j < width; ++j) gsum += G[r * width + j];
        for (std::size_t j = 0; j < width; ++j)
          GX[r * width + j] += G[r * width + j] - std::exp(L[r * width + j]) * gsum;
      }
    });
  }
  return y;
}

Tensor sum(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor y = Tensor::scalar(total, any_grad(x));
  if (y.requires_grad()) {
    tape.record("sum", {x}, y, [x](const Tensor& y) {
      const double g = y.grad()[0];
      for (double& gx : x.grad_buffer()) gx += g;
    });
  }
  return y;
}

Tensor mean(Tape& tape, const Tensor& x) {
  if (x.numel() == 0) throw Error("mean: empty tensor");
  const double n = static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor y = Tensor::scalar(total / n, any_grad(x));
  if (y.requires_grad()) {
    tape.record("mean", {x}, y, [x, n](const Tensor& y) {
      const double g = y.grad()[0] / n;
      for (double& gx : x.grad_buffer()) gx += g;
    });
  }
  return y;
}

Tensor mean_pool_time(Tape& tape, const Tensor& x) {
  if (x.rank() != 2 || x.dim(0) == 0) shape_error("mean_pool_time", x, "(frames x channels)");
  const std::size_t frames = x.dim(0), ch = x.dim(1);
  const auto X = x.data();
  std::vector<double> Y(ch, 0.0);
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t c = 0; c < ch; ++c) Y[c] += X[t * ch + c];
  const double inv = 1.0 / static_cast<double>(frames);
  for (double& v : Y) v *= inv;
  Tensor y({ch}, std::move(Y), any_grad(x));
  if (y.requires_grad()) {
    tape.record("mean_pool_time", {x}, y, [x, frames, ch, inv](const Tensor& y) {
      const auto G = y.grad();
      auto GX = x.grad_buffer();
      for (std::size_t t = 0; t < frames; ++t)
        for (std::size_t c = 0; c < ch; ++c) GX[t * ch + c] += G[c] * inv;
    });
  }
  return y;
}

Tensor gather_rows(Tape& tape, const Tensor& table, std::span<const std::uint32_t> indices) {
  if (table.rank() != 1 && table.rank() != 2) shape_error("gather_rows", table, "(k) or (k x d)");
  const std::size_t k = table.dim(0);
  const std::size_t d = table.rank() == 2 ? table.dim(1) : 1;
  for (std::uint32_t idx : indices)
    if (idx >= k)
      throw Error("gather_rows: index " + std::to_string(idx) + " out of range for table " +
                  shape_string(table.shape()));
  const auto T = table.data();
  std::vector<double> Y(indices.size() * d);
  for (std::size_t i = 0; i < indices.size(); ++i)
    for (std::size_t j = 0; j < d; ++j) Y[i * d + j] = T[indices[i] * d + j];
  Shape shape = table.rank() == 2 ? Shape{indices.size(), d} : Shape{indices.size()};
  Tensor y(std::move(shape), std::move(Y), any_grad(table));
  if (y.requires_grad()) {
    std::vector<std::uint32_t> idx(indices.begin(), indices.end());
    tape.record("gather_rows", {table}, y, [table, idx = std::move(idx), d](const Tensor& y) {
      const auto G = y.grad();
      auto GT = table.grad_buffer();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) GT[idx[i] * d + j] += G[i * d + j];
    });
  }
  return y;
}

Tensor stack_rows(Tape& tape, const std::vector<Tensor>& rows) {
  if (rows.empty()) throw Error("stack_rows: no rows");
  const std::size_t d = rows.front().numel();
  bool grad = false;
  std::vector<double> Y;
  Y.reserve(rows.size() * d);
  for (const auto& r : rows) {
    if (r.rank() != 1 || r.numel() != d) shape_error("stack_rows", rows.front(), r);
    grad = grad || r.requires_grad();
    Y.insert(Y.end(), r.data().begin(), r.data().end());
  }
  Tensor y({rows.size(), d}, std::move(Y), grad);
  if (y.requires_grad()) {
    tape.record("stack_rows", rows, y, [rows, d](const Tensor& y) {
      const auto G = y.grad();
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].requires_grad()) continue;
        auto GR = rows[i].grad_buffer();
        for (std::size_t j = 0; j < d; ++j) GR[j] += G[i * d + j];
      }
    });
  }
  return y;
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) shape_error("reshape", x, shape_string(shape));
  Tensor y(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()), any_grad(x));
  if (y.requires_grad()) {
    tape.record("reshape", {x}, y, [x](const Tensor& y) {
      const auto G = y.grad();
      auto GX = x.grad_buffer();
      for (std::size_t i = 0; i < G.size(); ++i) GX[i] += G[i];
    });
  }
  return y;
}

Tensor pick(Tape& tape, const Tensor& x, std::span<const std::size_t> cols) {
  if (x.rank() != 2 || x.dim(0) != cols.size())
    shape_error("pick", x, "(" + std::to_string(cols.size()) + " x c)");
  const std::size_t width = x.dim(1);
  for (std::size_t c : cols)
    if (c >= width)
      throw Error("pick: column " + std::to_string(c) + " out of range for " + shape_string(x.shape()));
  const auto X = x.data();
  std::vector<double> Y(cols.size());
  for (std::size_t i = 0; i < cols.size(); ++i) Y[i] = X[i * width + cols[i]];
  Tensor y({cols.size()}, std::move(Y), any_grad(x));
  if (y.requires_grad()) {
    std::vector<std::size_t> c(cols.begin(), cols.end());
    tape.record("pick", {x}, y, [x, c = std::move(c), width](const Tensor& y) {
      const auto G = y.grad();
      auto GX = x.grad_buffer();
      for (std::size_t i = 0; i < c.size(); ++i) GX[i * width + c[i]] += G[i];
    });
  }
  return y;
}

}  // namespace quads::ad
