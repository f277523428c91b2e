#pragma once

#include <functional>
#include <string>
#include <vector>

#include "quads/gradcheck.hpp"
#include "quads/ops.hpp"
#include "test_support.hpp"

namespace quads::test {

using namespace quads::ad;

struct Case {
  std::string name;
  // Builds the input for a seed and a scalar function of it.
  std::function<Tensor(std::uint64_t)> input;
  std::function<ScalarFn(std::uint64_t)> fn;
};

inline ScalarFn projected(std::function<Tensor(Tape&, const Tensor&)> op, Shape out_shape, std::uint64_t seed) {
  const Tensor r = random_tensor(out_shape, seed, 99);
  return [op, r](Tape& t, const Tensor& x) { return project(t, op(t, x), r); };
}

inline std::vector<Case> primitive_cases() {
  std::vector<Case> cases;
  const auto normal = [](Shape s) { return [s](std::uint64_t seed) { return random_tensor(s, seed, 1); }; };
  cases.push_back({"matmul_lhs", normal({3, 4}), [](std::uint64_t seed) {
                     const Tensor b = random_tensor({4, 2}, seed, 2);
                     return projected([b](Tape& t, const Tensor& x) { return matmul(t, x, b); }, {3, 2}, seed);
                   }});
  cases.push_back({"matmul_rhs", normal({4, 2}), [](std::uint64_t seed) {
                     const Tensor a = random_tensor({3, 4}, seed, 2);
                     return projected([a](Tape& t, const Tensor& x) { return matmul(t, a, x); }, {3, 2}, seed);
                   }});
  cases.push_back({"add", normal({2, 3}), [](std::uint64_t seed) {
                     const Tensor b = random_tensor({2, 3}, seed, 2);
                     return projected([b](Tape& t, const Tensor& x) { return add(t, x, b); }, {2, 3}, seed);
                   }});
  cases.push_back({"add_bias", normal({3}), [](std::uint64_t seed) {
                     const Tensor a = random_tensor({4, 3}, seed, 2);
                     return projected([a](Tape& t, const Tensor& x) { return add(t, a, x); }, {4, 3}, seed);
                   }});
  cases.push_back({"sub", normal({5}), [](std::uint64_t seed) {
                     const Tensor a = random_tensor({5}, seed, 2);
                     return projected([a](Tape& t, const Tensor& x) { return sub(t, a, x); }, {5}, seed);
                   }});
  cases.push_back({"mul_scalar", normal({2, 2}), [](std::uint64_t seed) {
                     return projected([](Tape& t, const Tensor& x) { return mul_scalar(t, x, -1.75); }, {2, 2}, seed);
                   }});
  cases.push_back({"conv1d_input", normal({9, 3}), [](std::uint64_t seed) {
                     const Tensor w = random_tensor({4, 3, 3}, seed, 2);
                     return projected([w](Tape& t, const Tensor& x) { return conv1d(t, x, w, 2); }, {4, 4}, seed);
                   }});
  cases.push_back({"conv1d_weight", normal({4, 3, 3}), [](std::uint64_t seed) {
                     const Tensor in = random_tensor({9, 3}, seed, 2);
                     return projected([in](Tape& t, const Tensor& w) { return conv1d(t, in, w, 2); }, {4, 4}, seed);
                   }});
  cases.push_back({"gelu", normal({7}), [](std::uint64_t seed) {
                     return projected([](Tape& t, const Tensor& x) { return gelu(t, x); }, {7}, seed);
                   }});
  cases.push_back({"relu", normal({7}), [](std::uint64_t seed) {
                     return projected([](Tape& t, const Tensor& x) { return relu(t, x); }, {7}, seed);
                   }});
  cases.push_back({"abs", normal({7}), [](std::uint64_t seed) {
                     return projected([](Tape& t, const Tensor& x) { return ad::abs(t, x); }, {7}, seed);
                   }});
  cases.push_back({"log", [](std::uint64_t seed) { return positive_tensor({6}, seed, 1); },
                   [](std::uint64_t seed) {
                     return projected([](Tape& t, const Tensor& x) { return ad::log(t, x); }, {6}, seed);
                   }});
  cases.push_back({"softmax", normal({3, 4}), [](std::uint64_t seed) {
                     return projected([](Tape& t, const Tensor& x) { return softmax(t, x); }, {3, 4}, seed);
                   }});
  cases.push_back({"log_softmax", normal({3, 4}), [](std::uint64_t seed) {
                     return projected([](Tape& t, const Tensor& x) { return log_softmax(t, x); }, {3, 4}, seed);
                   }});
  cases.push_back({"sum", normal({3, 2}), [](std::uint64_t) -> ScalarFn {
                     return [](Tape& t, const Tensor& x) { return sum(t, x); };
                   }});
  cases.push_back({"mean", normal({3, 2}), [](std::uint64_t) -> ScalarFn {
                     return [](Tape& t, const Tensor& x) { return mean(t, x); };
                   }});
  cases.push_back({"mean_pool_time", normal({5, 3}), [](std::uint64_t seed) {
                     return projected([](Tape& t, const Tensor& x) { return mean_pool_time(t, x); }, {3}, seed);
                   }});
  cases.push_back({"gather_rows_1d", normal({4}), [](std::uint64_t seed) {
                     static const std::vector<std::uint32_t> idx{3, 0, 0, 2, 3, 3, 1};
                     return projected([](Tape& t, const Tensor& x) { return gather_rows(t, x, idx); }, {7}, seed);
                   }});
  cases.push_back({"gather_rows_2d", normal({3, 2}), [](std::uint64_t seed) {
                     static const std::vector<std::uint32_t> idx{2, 2, 0};
                     return projected([](Tape& t, const Tensor& x) { return gather_rows(t, x, idx); }, {3, 2}, seed);
                   }});
  cases.push_back({"stack_rows", normal({3}), [](std::uint64_t seed) {
                     const Tensor other = random_tensor({3}, seed, 2);
                     return projected([other](Tape& t, const Tensor& x) { return stack_rows(t, {x, other, x}); },
                                      {3, 3}, seed);
                   }});
  cases.push_back({"reshape", normal({2, 3}), [](std::uint64_t seed) {
                     return projected([](Tape& t, const Tensor& x) { return reshape(t, x, {3, 2}); }, {3, 2}, seed);
                   }});
  cases.push_back({"pick", normal({3, 4}), [](std::uint64_t seed) {
                     static const std::vector<std::size_t> cols{1, 3, 0};
                     return projected([](Tape& t, const Tensor& x) { return pick(t, x, cols); }, {3}, seed);
                   }});
  return cases;
}

}  // namespace quads::test
