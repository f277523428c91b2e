#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace quads::dsp {

struct MelConfig {
  int sample_rate = 16000;
  std::size_t n_mels = 80;
  double window_ms = 25.0;
  double hop_ms = 10.0;
  double fmin = 0.0;
  std::optional<double> fmax;  // defaults to sample_rate / 2
  double log_floor = 1e-10;

  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  // Smallest power of two >= window_samples.
  std::size_t n_fft() const;
  std::size_t n_bins() const { return n_fft() / 2 + 1; }
  double max_frequency() const;

  void validate() const;
};

// Row-major (n_mels x frames).
struct MelSpectrogram {
  std::size_t n_mels = 0;
  std::size_t frames = 0;
  std::vector<double> values;
  MelConfig config;

  double at(std::size_t mel, std::size_t frame) const { return values[mel * frames + frame]; }
};

// Row-major (n_mels x n_bins) triangular filters.
struct FilterBank {
  std::size_t n_mels = 0;
  std::size_t n_bins = 0;
  std::vector<double> weights;

  double at(std::size_t mel, std::size_t bin) const { return weights[mel * n_bins + bin]; }
};

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Peak frequency of each filter, increasing.
std::vector<double> mel_center_frequencies(const MelConfig& cfg);

// Throws quads::Error when a filter covers no FFT bin.
FilterBank mel_filterbank(const MelConfig& cfg);

// floor((num_samples - window) / hop) + 1, or 0 when shorter than a window.
std::size_t frame_count(std::size_t num_samples, const MelConfig& cfg);

// Hann-windowed power spectrum -> mel filterbank -> ln(max(power, log_floor)).
MelSpectrogram log_mel(std::span<const double> wave, const MelConfig& cfg);

}  // namespace quads::dsp
