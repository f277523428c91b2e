#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quads/dsp.hpp"
#include "quads/model.hpp"
#include "quads/quantizer.hpp"

namespace quads::io {

// Packed model layout, all integers and floats little-endian:
//
//   "QDSM" | u16 version | u32 layer_count
//   per layer:
//     u16 id_len | id bytes (UTF-8) | u8 kind | u8 rank | rank x u32 dims
//     u8 storage (0 = fp32, 1 = codebook)
//     fp32:     P x f32
//     codebook: u8 bit_length | 2^b x f32 centroids | ceil(P*b/8) index bytes
//   u32 CRC-32 (IEEE) of every preceding byte
//
// Index bits are packed LSB-first within each byte, in row-major weight order.
inline constexpr std::uint16_t kPackedVersion = 1;
inline constexpr char kPackedMagic[4] = {'Q', 'D', 'S', 'M'};

enum class Storage : std::uint8_t { fp32 = 0, codebook = 1 };

struct PackedLayer {
  std::string id;
  ParamKind kind = ParamKind::dense_weight;
  ad::Shape shape;
  Storage storage = Storage::fp32;
  std::vector<float> values;  // fp32 storage
  LayerCodebook codebook;     // codebook storage

  bool operator==(const PackedLayer&) const = default;
};

// Everything needed to rebuild a ModelGraph from the packed tensors; kept in
// a JSON sidecar next to the packed file.
struct ModelMeta {
  EncoderConfig encoder;
  std::size_t n_classes = 0;
  std::vector<std::string> vocab;
  dsp::MelConfig mel;
  std::size_t input_frames = 0;
};

std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices, int bit_length);
std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> bytes, std::size_t count, int bit_length);

std::vector<PackedLayer> packed_layers(const QuantizedModel& model);
std::vector<std::uint8_t> encode_packed(std::span<const PackedLayer> layers);
// Throws FormatError with the byte offset on bad magic, version, truncation or
// CRC mismatch.
std::vector<PackedLayer> decode_packed(std::span<const std::uint8_t> bytes);

// Header + per-layer metadata + payloads + CRC, computed from shapes alone.
std::size_t packed_size(std::span<const PackedLayer> layers);
std::size_t packed_size(const QuantizedModel& model);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

// save_packed writes <path> and <path>.json; load_packed reads both.
void save_packed(const QuantizedModel& model, const ModelMeta& meta, const std::filesystem::path& path);
struct LoadedModel {
  QuantizedModel model;
  ModelMeta meta;
};
LoadedModel load_packed(const std::filesystem::path& path);

// Full-precision checkpoints use the same container with fp32 storage only.
void save_checkpoint(const ModelGraph& model, const ModelMeta& meta, const std::filesystem::path& path);
LoadedModel load_checkpoint(const std::filesystem::path& path, Role role = Role::student);

std::filesystem::path meta_path(const std::filesystem::path& model_path);
std::string meta_to_json(const ModelMeta& meta);
ModelMeta meta_from_json(const std::string& text);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace quads::io
