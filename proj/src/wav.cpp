#include "quads/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "quads/error.hpp"
#include "quads/model_io.hpp"

namespace quads::io {
namespace {

std::uint32_t le32(const std::uint8_t* p) {
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

std::uint16_t le16(const std::uint8_t* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

std::int16_t to_pcm16(double x) {
  const double scaled = std::round(x * 32768.0);
  return static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
}

WavData decode_wav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw FormatError("wav: file too short for a RIFF header", bytes.size());
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0) throw FormatError("wav: missing RIFF chunk id", 0);
  if (std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) throw FormatError("wav: RIFF format is not WAVE", 8);

  bool have_fmt = false;
  int sample_rate = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (bytes.size() - body < size) throw FormatError("wav: chunk size runs past end of file", pos + 4);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("wav: fmt chunk too short", pos + 4);
      const std::uint8_t* f = bytes.data() + body;
      const std::uint16_t format = le16(f);
      const std::uint16_t channels = le16(f + 2);
      const std::uint16_t bits = le16(f + 14);
      if (format != 1) throw FormatError("wav: audio_format " + std::to_string(format) + " is not PCM (1)", body);
      if (channels != 1) throw FormatError("wav: num_channels " + std::to_string(channels) + " is not mono", body + 2);
      if (bits != 16)
        throw FormatError("wav: bits_per_sample " + std::to_string(bits) + " is not 16", body + 14);
      sample_rate = static_cast<int>(le32(f + 4));
      if (sample_rate <= 0) throw FormatError("wav: sample_rate must be positive", body + 4);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("wav: data chunk before fmt chunk", pos);
      if (size % 2 != 0) throw FormatError("wav: data chunk size is not a whole number of samples", pos + 4);
      WavData out;
      out.sample_rate = sample_rate;
      out.samples.resize(size / 2);
      for (std::size_t i = 0; i < out.samples.size(); ++i)
        out.samples[i] = static_cast<std::int16_t>(le16(bytes.data() + body + 2 * i)) / 32768.0;
      return out;
    }
    pos = body + size + (size & 1u);
  }
  throw FormatError(have_fmt ? "wav: no data chunk" : "wav: no fmt chunk", pos);
}

WavData read_wav(const std::filesystem::path& path) {
  try {
    return decode_wav(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

std::vector<std::uint8_t> encode_wav(std::span<const std::int16_t> pcm, int sample_rate) {
  std::vector<std::uint8_t> out;
  const auto data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
  out.reserve(44 + data_bytes);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + data_bytes);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(sample_rate));
  put32(out, static_cast<std::uint32_t>(sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, data_bytes);
  for (std::int16_t s : pcm) put16(out, static_cast<std::uint16_t>(s));
  return out;
}

void write_wav(const std::filesystem::path& path, std::span<const std::int16_t> pcm, int sample_rate) {
  write_file(path, encode_wav(pcm, sample_rate));
}

}  // namespace quads::io
