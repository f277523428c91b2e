#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "quads/dsp.hpp"
#include "quads/error.hpp"
#include "quads/rng.hpp"

using namespace quads;
using namespace quads::dsp;

namespace {

std::vector<double> sine(double hz, std::size_t n, int sr, double amp = 0.5) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = amp * std::sin(2 * std::numbers::pi * hz * static_cast<double>(i) / sr);
  return w;
}

// Filter peaks written out directly from the HTK formula.
std::vector<double> center_oracle(std::size_t n_mels, double fmin, double fmax) {
  const auto mel = [](double f) { return 2595.0 * std::log10(1.0 + f / 700.0); };
  const auto hz = [](double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); };
  const double lo = mel(fmin), hi = mel(fmax);
  std::vector<double> c(n_mels);
  for (std::size_t i = 0; i < n_mels; ++i) c[i] = hz(lo + (hi - lo) * static_cast<double>(i + 1) / (n_mels + 1));
  return c;
}

}  // namespace

TEST(MelConfig, DefaultsMatchFrontend) {
  const MelConfig cfg;
  EXPECT_EQ(cfg.window_samples(), 400u);
  EXPECT_EQ(cfg.hop_samples(), 160u);
  EXPECT_EQ(cfg.n_fft(), 512u);
  EXPECT_EQ(cfg.n_bins(), 257u);
  EXPECT_DOUBLE_EQ(cfg.max_frequency(), 8000.0);
}

TEST(MelConfig, InvalidRangesRejected) {
  MelConfig cfg;
  cfg.fmin = 9000;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = MelConfig();
  cfg.fmax = 9000;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = MelConfig();
  cfg.window_ms = 5;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = MelConfig();
  cfg.n_mels = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(LogMel, OneSecondShape) {
  const MelConfig cfg;
  const auto m = log_mel(sine(440, 16000, 16000), cfg);
  EXPECT_EQ(m.n_mels, 80u);
  EXPECT_EQ(m.frames, 98u);
  EXPECT_EQ(m.values.size(), 80u * 98u);
}

TEST(LogMel, FrameLawForManyLengths) {
  const MelConfig cfg;
  for (std::size_t n : {400u, 401u, 559u, 560u, 561u, 4000u, 12345u}) {
    const auto m = log_mel(std::vector<double>(n, 0.01), cfg);
    EXPECT_EQ(m.frames, (n - 400) / 160 + 1) << n;
    EXPECT_EQ(frame_count(n, cfg), m.frames);
  }
  EXPECT_EQ(frame_count(399, cfg), 0u);
}

TEST(LogMel, SilenceHitsTheFloor) {
  const auto m = log_mel(std::vector<double>(16000, 0.0), MelConfig());
  for (double v : m.values) EXPECT_EQ(v, std::log(1e-10));
}

TEST(LogMel, ValuesNeverBelowFloor) {
  CounterRng rng(5);
  std::vector<double> w(8000);
  for (auto& x : w) x = 1e-7 * rng.normal();
  for (double v : log_mel(w, MelConfig()).values) EXPECT_GE(v, std::log(1e-10));
}

TEST(LogMel, PureToneArgmaxMatchesCenterOracle) {
  const MelConfig cfg;
  const auto centers = center_oracle(cfg.n_mels, 0.0, 8000.0);
  const auto nearest = static_cast<std::size_t>(
      std::min_element(centers.begin(), centers.end(),
                       [](double a, double b) { return std::abs(a - 1000.0) < std::abs(b - 1000.0); }) -
      centers.begin());
  const auto m = log_mel(sine(1000, 16000, 16000), cfg);
  for (std::size_t f = 0; f < m.frames; ++f) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < m.n_mels; ++k)
      if (m.at(k, f) > m.at(best, f)) best = k;
    ASSERT_EQ(best, nearest) << "frame " << f;
  }
}

TEST(Filterbank, CentersMatchOracleAndIncrease) {
  MelConfig cfg;
  cfg.fmin = 60;
  cfg.fmax = 7600;
  const auto got = mel_center_frequencies(cfg);
  const auto want = center_oracle(cfg.n_mels, 60, 7600);
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    EXPECT_NEAR(got[i], want[i], 1e-9);
    if (i) EXPECT_GT(got[i], got[i - 1]);
  }
  EXPECT_NEAR(mel_to_hz(hz_to_mel(1234.5)), 1234.5, 1e-9);
  EXPECT_NEAR(hz_to_mel(700.0), 2595.0 * std::log10(2.0), 1e-12);
}

TEST(Filterbank, TrianglesWithSingleMaximum) {
  const MelConfig cfg;
  const auto fb = mel_filterbank(cfg);
  ASSERT_EQ(fb.n_mels, 80u);
  ASSERT_EQ(fb.n_bins, 257u);
  for (std::size_t m = 0; m < fb.n_mels; ++m) {
    double peak = 0.0;
    std::size_t peaks = 0;
    for (std::size_t b = 0; b < fb.n_bins; ++b) {
      EXPECT_GE(fb.at(m, b), 0.0);
      peak = std::max(peak, fb.at(m, b));
    }
    for (std::size_t b = 0; b < fb.n_bins; ++b) peaks += fb.at(m, b) == peak;
    EXPECT_GT(peak, 0.0);
    EXPECT_EQ(peaks, 1u) << "filter " << m;
  }
}

TEST(Filterbank, InteriorBinsCovered) {
  for (std::size_t n_mels : {1u, 20u, 80u}) {
    MelConfig cfg;
    cfg.n_mels = n_mels;
    const auto fb = mel_filterbank(cfg);
    const double bin_hz = 16000.0 / 512.0;
    for (std::size_t b = 0; b < fb.n_bins; ++b) {
      const double f = b * bin_hz;
      if (f <= 0.0 || f >= 8000.0) continue;
      double s = 0.0;
      for (std::size_t m = 0; m < fb.n_mels; ++m) s += fb.at(m, b);
      EXPECT_GT(s, 0.0) << "bin " << b << " n_mels " << n_mels;
    }
  }
}

TEST(Filterbank, SingleTriangleSpansRange) {
  MelConfig cfg;
  cfg.n_mels = 1;
  const auto fb = mel_filterbank(cfg);
  EXPECT_EQ(fb.at(0, 0), 0.0);
  EXPECT_EQ(fb.at(0, fb.n_bins - 1), 0.0);
  EXPECT_GT(fb.at(0, 1), 0.0);
  EXPECT_GT(fb.at(0, fb.n_bins - 2), 0.0);
}

TEST(Filterbank, TooManyFiltersRejected) {
  MelConfig cfg;
  cfg.n_mels = 256;
  EXPECT_THROW(mel_filterbank(cfg), Error);
}

TEST(LogMel, LouderNeverLower) {
  CounterRng rng(11);
  std::vector<double> w(6000);
  for (auto& x : w) x = 0.1 * rng.normal();
  const auto a = log_mel(w, MelConfig());
  for (auto& x : w) x *= 1.7;
  const auto b = log_mel(w, MelConfig());
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_GE(b.values[i], a.values[i]);
}

TEST(LogMel, Deterministic) {
  const auto w = sine(523.25, 7000, 16000);
  EXPECT_EQ(log_mel(w, MelConfig()).values, log_mel(w, MelConfig()).values);
}

TEST(LogMel, ShortWaveRejectedWithMinimum) {
  try {
    log_mel(std::vector<double>(399, 0.0), MelConfig());
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("400"), std::string::npos) << e.what();
  }
}

TEST(LogMel, NonFiniteSampleRejected) {
  std::vector<double> w(1000, 0.0);
  w[17] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(log_mel(w, MelConfig()), Error);
}
