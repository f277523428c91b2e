#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace quads::io {

struct WavData {
  std::vector<double> samples;  // PCM value / 32768
  int sample_rate = 0;

  double duration_seconds() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// PCM16 mono only; anything else is rejected naming the offending field.
WavData read_wav(const std::filesystem::path& path);
WavData decode_wav(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_wav(std::span<const std::int16_t> pcm, int sample_rate);
void write_wav(const std::filesystem::path& path, std::span<const std::int16_t> pcm, int sample_rate);

// round(x * 32768) clamped to the int16 range.
std::int16_t to_pcm16(double x);

}  // namespace quads::io
