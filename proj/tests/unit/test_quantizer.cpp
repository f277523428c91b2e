#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "quads/error.hpp"
#include "quads/losses.hpp"
#include "quads/ops.hpp"
#include "quads/quantizer.hpp"
#include "quads/rng.hpp"
#include "test_support.hpp"

using namespace quads;

namespace {

std::vector<double> random_weights(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed, 17);
  std::vector<double> w(n);
  for (auto& v : w) v = rng.normal();
  return w;
}

// Minimum SSE over every split of the points into two non-empty groups.
double exhaustive_two_means(const std::vector<double>& w) {
  const std::size_t n = w.size();
  double best = std::numeric_limits<double>::infinity();
  for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
    double s[2] = {0, 0}, q[2] = {0, 0};
    double c[2] = {0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      const int g = (mask >> i) & 1;
      s[g] += w[i];
      q[g] += w[i] * w[i];
      c[g] += 1;
    }
    best = std::min(best, (q[0] - s[0] * s[0] / c[0]) + (q[1] - s[1] * s[1] / c[1]));
  }
  return best;
}

void expect_fixed_point(std::span<const double> w, const LayerCodebook& cb) {
  std::vector<double> sum(cb.k(), 0.0);
  std::vector<std::size_t> count(cb.k(), 0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double own = std::abs(w[i] - cb.centroids[cb.indices[i]]);
    for (double c : cb.centroids) EXPECT_LE(own, std::abs(w[i] - c));
    EXPECT_EQ(cb.indices[i], nearest_centroid(w[i], cb.centroids));
    sum[cb.indices[i]] += w[i];
    ++count[cb.indices[i]];
  }
  for (std::size_t k = 0; k < cb.k(); ++k)
    if (count[k]) EXPECT_NEAR(cb.centroids[k], sum[k] / static_cast<double>(count[k]), 1e-12);
}

EncoderConfig toy_config() {
  EncoderConfig c;
  c.n_mels = 12;
  c.conv_layers = {{3, 8, 2}};
  c.ff_layers = {10};
  c.latent_dim = 6;
  return c;
}

}  // namespace

TEST(KMeans, ExactlyKDistinctValuesIsLossless) {
  std::vector<double> w;
  for (int rep = 0; rep < 5; ++rep)
    for (double v : {-0.5, 0.125, 0.75, 3.0}) w.push_back(v);
  const auto cb = kmeans_fit(w, 2, 100, 3, 4);
  EXPECT_EQ(codebook_sse(w, cb), 0.0);
  const auto r = reconstruct(cb, {w.size()});
  EXPECT_TRUE(quads::test::bit_equal(r.data(), w));
}

TEST(KMeans, TwoClustersOfPairs) {
  const std::vector<double> w{0, 0, 10, 10};
  const auto cb = kmeans_fit(w, 1, 50, 0, 3);
  std::vector<double> c = cb.centroids;
  std::sort(c.begin(), c.end());
  EXPECT_EQ(c, (std::vector<double>{0, 10}));
  EXPECT_EQ(codebook_sse(w, cb), 0.0);
  EXPECT_NEAR(exhaustive_two_means(w), 0.0, 1e-12);
}

TEST(KMeans, BestOfEightMatchesExhaustiveOptimum) {
  int hits = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CounterRng rng(seed, 3);
    const std::size_t n = 4 + rng.below(9);
    const auto w = random_weights(n, seed);
    const auto cb = kmeans_fit(w, 1, 100, seed, 8);
    hits += std::abs(codebook_sse(w, cb) - exhaustive_two_means(w)) <= 1e-9;
  }
  EXPECT_GE(hits, 95);
}

TEST(KMeans, SseNeverIncreasesAndEndsAtFixedPoint) {
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto w = random_weights(300, seed);
    for (int b : {1, 2, 3, 4}) {
      KMeansTrace trace;
      const auto cb = kmeans_fit(w, b, 200, seed, 3, &trace);
      ASSERT_FALSE(trace.sse.empty());
      for (std::size_t i = 1; i < trace.sse.size(); ++i)
        EXPECT_LE(trace.sse[i], trace.sse[i - 1] * (1 + 1e-12)) << "seed " << seed << " b " << b << " step " << i;
      EXPECT_TRUE(trace.converged);
      EXPECT_NEAR(trace.sse.back(), codebook_sse(w, cb), 1e-9);
      expect_fixed_point(w, cb);
      cb.validate();
    }
  }
}

TEST(KMeans, FewerDistinctValuesThanCentroids) {
  const std::vector<double> w{1, 1, 2};
  const auto cb = kmeans_fit(w, 2, 10, 0, 2);
  EXPECT_EQ(cb.centroids, (std::vector<double>{1, 2, 2, 2}));
  EXPECT_EQ(cb.indices, (std::vector<std::uint32_t>{0, 0, 1}));
  EXPECT_EQ(codebook_sse(w, cb), 0.0);
}

TEST(KMeans, RejectsBadArguments) {
  const std::vector<double> w{1, 2, 3};
  EXPECT_THROW(kmeans_fit(w, 17, 10, 0, 1), Error);
  EXPECT_THROW(kmeans_fit(w, 0, 10, 0, 1), Error);
  EXPECT_THROW(kmeans_fit(std::vector<double>{}, 2, 10, 0, 1), Error);
}

TEST(KMeans, DeterministicForSeed) {
  const auto w = random_weights(500, 8);
  EXPECT_EQ(kmeans_fit(w, 3, 100, 5, 3), kmeans_fit(w, 3, 100, 5, 3));
}

TEST(KMeans, TiesBreakTowardLowestIndex) {
  const std::vector<double> c{-1.0, 1.0, 1.0};
  EXPECT_EQ(nearest_centroid(0.0, c), 0u);
  EXPECT_EQ(nearest_centroid(1.0, c), 1u);
}

TEST(KMeans, WarmRefitDoesNotWorsen) {
  const auto w = random_weights(400, 2);
  const auto cb = kmeans_fit(w, 3, 100, 1, 2);
  auto drifted = w;
  for (auto& v : drifted) v += 0.01;
  const auto refit = kmeans_refit(drifted, cb, 100);
  LayerCodebook stale = cb;
  stale.indices = assign_nearest(drifted, cb.centroids);
  EXPECT_LE(codebook_sse(drifted, refit), codebook_sse(drifted, stale) + 1e-12);
  expect_fixed_point(drifted, refit);
}

TEST(Reconstruct, DirectLookup) {
  LayerCodebook cb{1, {-1, 2}, {0, 1, 1, 0}};
  const auto r = reconstruct(cb, {2, 2});
  EXPECT_EQ(std::vector<double>(r.data().begin(), r.data().end()), (std::vector<double>{-1, 2, 2, -1}));
  EXPECT_EQ(r.shape(), (ad::Shape{2, 2}));
  EXPECT_THROW(reconstruct(cb, {3}), Error);
}

TEST(Reconstruct, SingleCentroidIsConstant) {
  const std::vector<double> w{0.25, 0.25, 0.25};
  // b=1 still has two centroids; collapse to one value via a codebook whose
  // indices all point at entry 0.
  LayerCodebook cb{1, {0.25, 0.25}, {0, 0, 0}};
  const auto r = reconstruct(cb, {3});
  for (double v : r.data()) EXPECT_EQ(v, 0.25);
  EXPECT_EQ(distinct_values(r.data()), 1u);
}

TEST(CentroidGradient, IndicatorSums) {
  const std::vector<double> g{0.3, -0.1, 0.2, 0.4};
  const std::vector<std::uint32_t> idx{0, 1, 0, 1};
  const auto gc = centroid_gradient(g, idx, 2);
  EXPECT_NEAR(gc[0], 0.5, 1e-15);
  EXPECT_NEAR(gc[1], 0.3, 1e-15);
  EXPECT_EQ(centroid_gradient(std::vector<double>(4, 0.0), idx, 2), (std::vector<double>{0, 0}));
  EXPECT_EQ(centroid_gradient(g, idx, 4)[3], 0.0);
  const std::vector<std::uint32_t> bad{0, 1, 2, 1};
  EXPECT_THROW(centroid_gradient(g, bad, 2), Error);
  EXPECT_THROW(centroid_gradient(g, std::vector<std::uint32_t>{0, 1}, 2), Error);
}

// Task loss of a 5x5 layer: CE of fixed inputs through W_hat = C[I].
double layer_loss(const std::vector<double>& centroids, const std::vector<std::uint32_t>& idx, const ad::Tensor& x,
                  const std::vector<std::size_t>& labels) {
  ad::Tape tape;
  LayerCodebook cb{3, centroids, idx};
  const auto w = reconstruct(cb, {5, 5});
  return cross_entropy(tape, ad::matmul(tape, x, w), labels).item();
}

TEST(CentroidGradient, MatchesFiniteDifferencesThroughReconstruct) {
  const std::vector<std::size_t> labels{0, 4, 2};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto weights = random_weights(25, seed);
    const auto cb = kmeans_fit(weights, 3, 100, seed, 2);
    const ad::Tensor x = quads::test::random_tensor({3, 5}, seed, 5);

    ad::Tape tape;
    const auto w_hat = reconstruct(cb, {5, 5});
    const ad::Tensor leaf(w_hat.shape(), {w_hat.data().begin(), w_hat.data().end()}, true);
    tape.backward(cross_entropy(tape, ad::matmul(tape, x, leaf), labels));
    const auto grad_c = centroid_gradient(leaf.grad(), cb.indices, cb.k());

    const double eps = 1e-6;
    for (std::size_t k = 0; k < cb.k(); ++k) {
      auto up = cb.centroids, down = cb.centroids;
      up[k] += eps;
      down[k] -= eps;
      const double fd = (layer_loss(up, cb.indices, x, labels) - layer_loss(down, cb.indices, x, labels)) / (2 * eps);
      EXPECT_LE(std::abs(grad_c[k] - fd) / std::max(1.0, std::abs(grad_c[k])), 1e-5) << "seed " << seed << " k " << k;
    }
  }
}

TEST(CentroidGradient, BitEqualToGatherAutodiff) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto weights = random_weights(36, seed);
    const auto cb = kmeans_fit(weights, 2, 100, seed, 2);
    const ad::Tensor x = quads::test::random_tensor({4, 6}, seed, 2);
    const std::vector<std::size_t> labels{1, 0, 5, 3};

    ad::Tape t1;
    const auto w_hat = reconstruct(cb, {6, 6});
    const ad::Tensor leaf(w_hat.shape(), {w_hat.data().begin(), w_hat.data().end()}, true);
    t1.backward(cross_entropy(t1, ad::matmul(t1, x, leaf), labels));
    const auto via_eq4 = centroid_gradient(leaf.grad(), cb.indices, cb.k());

    ad::Tape t2;
    const ad::Tensor c(ad::Shape{cb.k()}, cb.centroids, true);
    const auto gathered = ad::reshape(t2, ad::gather_rows(t2, c, cb.indices), {6, 6});
    t2.backward(cross_entropy(t2, ad::matmul(t2, x, gathered), labels));
    EXPECT_TRUE(quads::test::bit_equal(via_eq4, c.grad())) << seed;
  }
}

TEST(CodebookStep, Updates) {
  const LayerCodebook cb{1, {1, 2}, {0, 1, 1}};
  EXPECT_EQ(apply_codebook_step(cb, std::vector<double>{0.5, -0.5}, 1.0).centroids, (std::vector<double>{0.5, 2.5}));
  EXPECT_EQ(apply_codebook_step(cb, std::vector<double>{0.5, -0.5}, 0.0), cb);
  const std::vector<double> g1{0.25, -0.75}, g2{0.5, 0.125};
  const auto twice = apply_codebook_step(apply_codebook_step(cb, g1, 0.5), g2, 0.5);
  const auto once = apply_codebook_step(cb, std::vector<double>{0.75, -0.625}, 0.5);
  EXPECT_EQ(twice.centroids, once.centroids);
  EXPECT_EQ(twice.indices, cb.indices);
  EXPECT_THROW(apply_codebook_step(cb, std::vector<double>{std::nan(""), 0}, 1.0), NumericalError);
  EXPECT_THROW(apply_codebook_step(cb, std::vector<double>{1.0}, 1.0), Error);
}

TEST(QuantizeModel, SixteenBitsIsLossless) {
  const auto student = initialize(toy_config(), 3, InitMode::random(), 4);
  const auto q = quantize_model(student, 16, QuantPolicy{}, 4);
  for (const auto& p : student.parameters())
    EXPECT_TRUE(quads::test::bit_equal(p.value.data(), q.base.parameter(p.id).value.data())) << p.id;
}

TEST(QuantizeModel, PolicySelectsTensors) {
  const auto student = initialize(toy_config(), 3, InitMode::random(), 4);
  const auto q = quantize_model(student, 2, QuantPolicy{}, 4);
  for (const auto& p : student.parameters()) EXPECT_EQ(q.is_quantized(p.id), is_weight(p.kind)) << p.id;
  EXPECT_TRUE(q.is_quantized("head.weight"));

  QuantPolicy no_head;
  no_head.quantize_head = false;
  EXPECT_FALSE(quantize_model(student, 2, no_head, 4).is_quantized("head.weight"));
  QuantPolicy with_bias;
  with_bias.quantize_biases = true;
  EXPECT_TRUE(quantize_model(student, 2, with_bias, 4).is_quantized("encoder.ff0.bias"));
}

TEST(QuantizeModel, DistinctValueBound) {
  const auto student = initialize(toy_config(), 3, InitMode::random(), 6);
  for (int b : {1, 2, 4}) {
    const auto q = quantize_model(student, b, QuantPolicy{}, 6);
    for (const auto& [id, cb] : q.codebooks) {
      EXPECT_LE(distinct_values(q.base.parameter(id).value.data()), std::size_t{1} << b) << id;
      EXPECT_EQ(cb.k(), std::size_t{1} << b);
      for (double c : cb.centroids) EXPECT_EQ(c, static_cast<double>(static_cast<float>(c)));
    }
  }
}

TEST(QuantizeModel, ExemptTensorsCopied) {
  auto student = initialize(toy_config(), 3, InitMode::random(), 6);
  student.set_values(student.index_of("encoder.ff0.bias"), std::vector<double>(10, 0.375));
  const auto q = quantize_model(student, 2, QuantPolicy{}, 6);
  for (double v : q.base.parameter("encoder.ff0.bias").value.data()) EXPECT_EQ(v, 0.375);
  EXPECT_EQ(q.bit_length, 2);
  EXPECT_EQ(q.codebook_entry_count(), q.codebooks.size() * 4);
}
