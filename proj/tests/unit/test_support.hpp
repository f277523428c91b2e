#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <string>

#include <unistd.h>
#include <span>
#include <vector>

#include "quads/ops.hpp"
#include "quads/rng.hpp"
#include "quads/tensor.hpp"

namespace quads::test {

inline ad::Tensor random_tensor(ad::Shape shape, std::uint64_t seed, std::uint64_t stream = 0, double scale = 1.0,
                                bool requires_grad = false) {
  CounterRng rng(seed, stream);
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = scale * rng.normal();
  return ad::Tensor(std::move(shape), std::move(v), requires_grad);
}

inline ad::Tensor positive_tensor(ad::Shape shape, std::uint64_t seed, std::uint64_t stream = 0) {
  CounterRng rng(seed, stream);
  std::vector<double> v(ad::shape_numel(shape));
  for (auto& x : v) x = rng.uniform(0.2, 3.0);
  return ad::Tensor(std::move(shape), std::move(v));
}

// Scalar projection <y, r> through taped ops, so a non-scalar op output can be
// checked against finite differences.
inline ad::Tensor project(ad::Tape& tape, const ad::Tensor& y, const ad::Tensor& r) {
  const auto flat = ad::reshape(tape, y, {1, y.numel()});
  return ad::sum(tape, ad::matmul(tape, flat, ad::reshape(tape, r, {r.numel(), 1})));
}

inline bool bit_equal(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& name) {
    path = std::filesystem::temp_directory_path() /
           ("quads-test-" + name + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace quads::test
