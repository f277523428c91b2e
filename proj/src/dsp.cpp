#include "quads/dsp.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "quads/error.hpp"

namespace quads::dsp {
namespace {

// The FFTW planner is not thread-safe; execution with new-array calls is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : n_(n),
        in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_.get(), reinterpret_cast<fftw_complex*>(out_.get()),
                                 FFTW_ESTIMATE);
  }
  ~RealFft() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_.get(); }

  // |X[k]|^2 for k in [0, n/2].
  void power(std::vector<double>& out) {
    fftw_execute(plan_);
    const auto* spec = reinterpret_cast<const fftw_complex*>(out_.get());
    out.resize(n_ / 2 + 1);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
  }

 private:
  std::size_t n_;
  std::unique_ptr<double, FftwFree> in_;
  std::unique_ptr<void, FftwFree> out_;
  fftw_plan plan_;
};

}  // namespace

std::size_t MelConfig::window_samples() const {
  return static_cast<std::size_t>(std::lround(sample_rate * window_ms / 1000.0));
}

std::size_t MelConfig::hop_samples() const {
  return static_cast<std::size_t>(std::lround(sample_rate * hop_ms / 1000.0));
}

std::size_t MelConfig::n_fft() const {
  std::size_t n = 1;
  while (n < window_samples()) n <<= 1;
  return n;
}

double MelConfig::max_frequency() const { return fmax.value_or(sample_rate / 2.0); }

void MelConfig::validate() const {
  if (sample_rate <= 0) throw Error("mel config: sample_rate must be positive");
  if (n_mels < 1) throw Error("mel config: n_mels must be >= 1");
  if (hop_samples() < 1) throw Error("mel config: hop must cover at least one sample");
  if (window_ms < hop_ms) throw Error("mel config: window_ms must be >= hop_ms");
  const double hi = max_frequency();
  if (!(fmin >= 0.0 && fmin < hi && hi <= sample_rate / 2.0))
    throw Error("mel config: need 0 <= fmin < fmax <= sample_rate/2, got fmin=" + std::to_string(fmin) +
                " fmax=" + std::to_string(hi));
  if (!(log_floor > 0.0)) throw Error("mel config: log_floor must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

// n_mels + 2 edge frequencies equally spaced on the mel scale.
std::vector<double> edge_frequencies(const MelConfig& cfg) {
  const double lo = hz_to_mel(cfg.fmin);
  const double hi = hz_to_mel(cfg.max_frequency());
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  // Pin the outer edges; the mel round trip is not exact.
  edges.front() = cfg.fmin;
  edges.back() = cfg.max_frequency();
  return edges;
}

}  // namespace

std::vector<double> mel_center_frequencies(const MelConfig& cfg) {
  cfg.validate();
  const auto edges = edge_frequencies(cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

FilterBank mel_filterbank(const MelConfig& cfg) {
  cfg.validate();
  const auto edges = edge_frequencies(cfg);
  FilterBank fb;
  fb.n_mels = cfg.n_mels;
  fb.n_bins = cfg.n_bins();
  fb.weights.assign(fb.n_mels * fb.n_bins, 0.0);
  const double bin_hz = static_cast<double>(cfg.sample_rate) / static_cast<double>(cfg.n_fft());
  for (std::size_t m = 0; m < fb.n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    bool support = false;
    for (std::size_t k = 0; k < fb.n_bins; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > left && f <= center)
        w = (f - left) / (center - left);
      else if (f > center && f < right)
        w = (right - f) / (right - center);
      if (w > 0.0) support = true;
      fb.weights[m * fb.n_bins + k] = w;
    }
    if (!support)
      throw Error("mel filterbank: filter " + std::to_string(m) + " (" + std::to_string(left) + "-" +
                  std::to_string(right) + " Hz) covers no FFT bin; reduce n_mels or enlarge the window");
  }
  return fb;
}

std::size_t frame_count(std::size_t num_samples, const MelConfig& cfg) {
  const std::size_t win = cfg.window_samples();
  if (num_samples < win) return 0;
  return (num_samples - win) / cfg.hop_samples() + 1;
}

MelSpectrogram log_mel(std::span<const double> wave, const MelConfig& cfg) {
  cfg.validate();
  const std::size_t win = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  if (wave.size() < win)
    throw Error("log_mel: waveform has " + std::to_string(wave.size()) + " samples, need at least " +
                std::to_string(win) + " (one window)");
  for (double s : wave)
    if (!std::isfinite(s)) throw NumericalError("log_mel: waveform contains non-finite samples");

  const FilterBank fb = mel_filterbank(cfg);
  const std::size_t n_fft = cfg.n_fft();
  std::vector<double> hann(win);
  for (std::size_t i = 0; i < win; ++i)
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(win));

  MelSpectrogram out;
  out.n_mels = cfg.n_mels;
  out.frames = frame_count(wave.size(), cfg);
  out.config = cfg;
  out.values.assign(out.n_mels * out.frames, 0.0);

  RealFft fft(n_fft);
  std::vector<double> power;
  const double floor_log = std::log(cfg.log_floor);
  for (std::size_t t = 0; t < out.frames; ++t) {
    double* in = fft.input();
    const double* frame = wave.data() + t * hop;
    for (std::size_t i = 0; i < win; ++i) in[i] = frame[i] * hann[i];
    std::fill(in + win, in + n_fft, 0.0);
    fft.power(power);
    for (std::size_t m = 0; m < out.n_mels; ++m) {
      const double* row = &fb.weights[m * fb.n_bins];
      double e = 0.0;
      for (std::size_t k = 0; k < fb.n_bins; ++k) e += row[k] * power[k];
      out.values[m * out.frames + t] = e > cfg.log_floor ? std::log(e) : floor_log;
    }
  }
  return out;
}

}  // namespace quads::dsp
