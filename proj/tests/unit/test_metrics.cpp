#include <gtest/gtest.h>

#include <vector>

#include "quads/error.hpp"
#include "quads/metrics.hpp"
#include "quads/quantizer.hpp"

using namespace quads;

TEST(Accuracy, Fractions) {
  const std::vector<std::size_t> labels{0, 1, 2, 1};
  EXPECT_EQ(accuracy(labels, labels), 1.0);
  EXPECT_EQ(accuracy(std::vector<std::size_t>{1, 0, 0, 0}, labels), 0.0);
  EXPECT_EQ(accuracy(std::vector<std::size_t>{0, 1, 2, 0}, labels), 0.75);
  EXPECT_THROW(accuracy(std::vector<std::size_t>{}, std::vector<std::size_t>{}), Error);
  EXPECT_THROW(accuracy(std::vector<std::size_t>{1}, labels), Error);
}

TEST(MacroF1, Perfect) {
  const std::vector<std::size_t> labels{0, 1, 2, 2};
  EXPECT_EQ(macro_f1(labels, labels, 3), 1.0);
  EXPECT_EQ(macro_f1(labels, labels, 3), accuracy(labels, labels));
}

TEST(MacroF1, BinaryConfusionMatrix) {
  // Class 1: TP=2, FP=1, FN=1; class 0 mirrors it.
  const std::vector<std::size_t> labels{1, 1, 1, 0, 0, 0};
  const std::vector<std::size_t> preds{1, 1, 0, 1, 0, 0};
  EXPECT_NEAR(macro_f1(preds, labels, 2), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(macro_f1(preds, labels, 2), macro_f1(preds, labels, 5));
}

TEST(MacroF1, PresentButMissedClassCountsAsZero) {
  const std::vector<std::size_t> labels{0, 0, 1};
  const std::vector<std::size_t> preds{0, 0, 0};
  // Class 0: P=2/3, R=1 -> 0.8; class 1: 0.
  EXPECT_NEAR(macro_f1(preds, labels, 2), 0.4, 1e-15);
  EXPECT_LE(macro_f1(preds, labels, 2), 1.0);
}

TEST(MacroF1, Rejects) {
  const std::vector<std::size_t> v{0};
  EXPECT_THROW(macro_f1(v, v, 0), Error);
  EXPECT_THROW(macro_f1(std::vector<std::size_t>{3}, v, 2), Error);
}

TEST(ModelSize, MebibyteConvention) {
  EXPECT_NEAR(model_size_mb(7.25e6, 32), 27.66, 0.01);
  EXPECT_NEAR(model_size_mb(7.25e6, 4), 3.46, 0.01);
  EXPECT_NEAR(model_size_mb(7.64e6, 16), 14.58, 0.01);
  EXPECT_EQ(round2(model_size_mb(7.25e6, 32)), 27.66);
  EXPECT_EQ(model_size_mb(1 << 20, 8), 1.0);
  for (int b : {2, 4, 8, 16}) EXPECT_EQ(model_size_mb(123457, 2 * b), 2 * model_size_mb(123457, b));
  EXPECT_EQ(model_size_mb(1000, 16), 2 * model_size_mb(1000, 8));
}

TEST(Macs, DefinitionalCounts) {
  EncoderConfig dense_only;
  dense_only.n_mels = 4;
  dense_only.conv_layers = {{1, 4, 1}};
  dense_only.latent_dim = 4;
  const auto layers = count_macs(dense_only, 3, 10);
  EXPECT_EQ(layers.back().id, "head");
  EXPECT_EQ(layers.back().macs, 12u);

  EncoderConfig conv;
  conv.n_mels = 2;
  conv.conv_layers = {{3, 4, 1}};
  conv.latent_dim = 4;
  const auto c = count_macs(conv, 3, 12);
  EXPECT_EQ(c.front().macs, 240u);
  // Projection runs per frame: 4 * 4 * 10.
  EXPECT_EQ(c[1].macs, 160u);
  EXPECT_NEAR(count_gmacs(conv, 3, 12), (240 + 160 + 12) / 1e9, 1e-18);
}

TEST(Macs, IndependentOfBitsAndValues) {
  EncoderConfig cfg;
  cfg.n_mels = 8;
  cfg.conv_layers = {{3, 6, 2}};
  cfg.ff_layers = {5};
  cfg.latent_dim = 4;
  const auto a = initialize(cfg, 3, InitMode::random(), 1);
  const auto b = initialize(cfg, 3, InitMode::random(), 2);
  const auto q = quantize_model(a, 4, QuantPolicy{}, 1);
  EXPECT_EQ(count_gmacs(a, 50), count_gmacs(b, 50));
  EXPECT_EQ(count_gmacs(a, 50), count_gmacs(q.base, 50));
  EXPECT_EQ(count_gmacs(a, 50), count_gmacs(cfg, 3, 50));
}

TEST(Energy, ConfiguredTableOnly) {
  EXPECT_EQ(energy_proxy(2.0, 32, {{32, 1.0}}), 2e9);
  EXPECT_EQ(energy_proxy(2.0, 4, {{4, 0.5}}) * 3, energy_proxy(2.0, 4, {{4, 1.5}}));
  const double ratio = energy_proxy(3.0, 4, {{4, 0.2}, {32, 1.0}}) / energy_proxy(1.5, 32, {{4, 0.2}, {32, 1.0}});
  EXPECT_NEAR(ratio, 2.0 * 0.2, 1e-15);
  EXPECT_THROW(energy_proxy(1.0, 8, {{32, 1.0}}), Error);
}
