#include "quads/model_io.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>

#include "quads/error.hpp"

namespace quads::io {
namespace {

static_assert(std::endian::native == std::endian::little, "packed format writer assumes a little-endian host");

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { bytes(&v, 2); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  std::vector<std::uint8_t>& buffer() { return out_; }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t offset() const { return pos_; }

  void need(std::size_t n, const char* what) const {
    if (in_.size() - pos_ < n) throw FormatError(std::string("packed model truncated while reading ") + what, pos_);
  }
  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  std::uint8_t u8(const char* what) { return take(1, what)[0]; }
  std::uint16_t u16(const char* what) {
    std::uint16_t v;
    std::memcpy(&v, take(2, what).data(), 2);
    return v;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    std::memcpy(&v, take(4, what).data(), 4);
    return v;
  }
  float f32(const char* what) {
    float v;
    std::memcpy(&v, take(4, what).data(), 4);
    return v;
  }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

constexpr std::size_t kHeaderBytes = 4 + 2 + 4;
constexpr std::size_t kCrcBytes = 4;

std::size_t index_bytes(std::size_t count, int bit_length) {
  return (count * static_cast<std::size_t>(bit_length) + 7) / 8;
}

std::size_t layer_meta_bytes(const PackedLayer& layer) {
  std::size_t n = 2 + layer.id.size() + 1 + 1 + 4 * layer.shape.size() + 1;
  if (layer.storage == Storage::codebook) n += 1;
  return n;
}

}  // namespace

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> pack_indices(std::span<const std::uint32_t> indices, int bit_length) {
  if (bit_length < 1 || bit_length > kMaxCodebookBits) throw Error("pack_indices: bit length outside [1, 16]");
  std::vector<std::uint8_t> out(index_bytes(indices.size(), bit_length), 0);
  std::size_t bit = 0;
  for (std::uint32_t idx : indices) {
    if (idx >> bit_length) throw Error("pack_indices: index " + std::to_string(idx) + " needs more than " +
                                       std::to_string(bit_length) + " bits");
    for (int b = 0; b < bit_length; ++b, ++bit)
      if ((idx >> b) & 1u) out[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
  }
  return out;
}

std::vector<std::uint32_t> unpack_indices(std::span<const std::uint8_t> bytes, std::size_t count, int bit_length) {
  if (bit_length < 1 || bit_length > kMaxCodebookBits) throw Error("unpack_indices: bit length outside [1, 16]");
  if (bytes.size() < index_bytes(count, bit_length)) throw Error("unpack_indices: index stream too short");
  std::vector<std::uint32_t> out(count, 0);
  std::size_t bit = 0;
  for (std::size_t i = 0; i < count; ++i)
    for (int b = 0; b < bit_length; ++b, ++bit)
      if ((bytes[bit / 8] >> (bit % 8)) & 1u) out[i] |= 1u << b;
  return out;
}

std::vector<PackedLayer> packed_layers(const QuantizedModel& model) {
  std::vector<PackedLayer> layers;
  for (const auto& p : model.base.parameters()) {
    PackedLayer layer;
    layer.id = p.id;
    layer.kind = p.kind;
    layer.shape = p.value.shape();
    const auto it = model.codebooks.find(p.id);
    if (it != model.codebooks.end()) {
      layer.storage = Storage::codebook;
      layer.codebook = it->second;
      layer.codebook.validate();
    } else {
      layer.storage = Storage::fp32;
      layer.values.assign(p.value.data().begin(), p.value.data().end());
    }
    layers.push_back(std::move(layer));
  }
  return layers;
}

std::vector<std::uint8_t> encode_packed(std::span<const PackedLayer> layers) {
  Writer w;
  w.bytes(kPackedMagic, 4);
  w.u16(kPackedVersion);
  w.u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& layer : layers) {
    if (layer.id.size() > 0xFFFF) throw Error("encode_packed: layer id too long");
    w.u16(static_cast<std::uint16_t>(layer.id.size()));
    w.bytes(layer.id.data(), layer.id.size());
    w.u8(static_cast<std::uint8_t>(layer.kind));
    w.u8(static_cast<std::uint8_t>(layer.shape.size()));
    for (std::size_t d : layer.shape) w.u32(static_cast<std::uint32_t>(d));
    w.u8(static_cast<std::uint8_t>(layer.storage));
    const std::size_t count = ad::shape_numel(layer.shape);
    if (layer.storage == Storage::codebook) {
      const auto& cb = layer.codebook;
      if (cb.indices.size() != count) throw Error("encode_packed: " + layer.id + " index count does not match shape");
      w.u8(static_cast<std::uint8_t>(cb.bit_length));
      for (double c : cb.centroids) w.f32(static_cast<float>(c));
      const auto packed = pack_indices(cb.indices, cb.bit_length);
      w.bytes(packed.data(), packed.size());
    } else {
      if (layer.values.size() != count) throw Error("encode_packed: " + layer.id + " value count does not match shape");
      for (float v : layer.values) w.f32(v);
    }
  }
  const std::uint32_t crc = crc32(w.buffer());
  w.u32(crc);
  return std::move(w.buffer());
}

std::vector<PackedLayer> decode_packed(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes + kCrcBytes) throw FormatError("packed model truncated: file too short", bytes.size());
  if (std::memcmp(bytes.data(), kPackedMagic, 4) != 0) throw FormatError("packed model: bad magic", 0);
  const std::size_t body = bytes.size() - kCrcBytes;
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + body, 4);
  if (crc32(bytes.first(body)) != stored) throw FormatError("packed model: CRC mismatch", body);
  Reader r(bytes.first(body));
  r.take(4, "magic");
  const std::uint16_t version = r.u16("version");
  if (version != kPackedVersion)
    throw FormatError("packed model: unsupported version " + std::to_string(version), 4);
  const std::uint32_t count = r.u32("layer count");
  std::vector<PackedLayer> layers;
  for (std::uint32_t l = 0; l < count; ++l) {
    PackedLayer layer;
    const std::uint16_t id_len = r.u16("layer id length");
    const auto id = r.take(id_len, "layer id");
    layer.id.assign(id.begin(), id.end());
    const std::size_t kind_at = r.offset();
    const std::uint8_t kind = r.u8("kind tag");
    if (kind > static_cast<std::uint8_t>(ParamKind::head_bias))
      throw FormatError("packed model: unknown kind tag " + std::to_string(kind), kind_at);
    layer.kind = static_cast<ParamKind>(kind);
    const std::uint8_t rank = r.u8("rank");
    for (std::uint8_t d = 0; d < rank; ++d) layer.shape.push_back(r.u32("dimension"));
    const std::size_t storage_at = r.offset();
    const std::uint8_t storage = r.u8("storage tag");
    const std::size_t n = ad::shape_numel(layer.shape);
    if (storage == static_cast<std::uint8_t>(Storage::codebook)) {
      layer.storage = Storage::codebook;
      const std::size_t bits_at = r.offset();
      const int b = r.u8("bit length");
      if (b < 1 || b > kMaxCodebookBits)
        throw FormatError("packed model: bit length " + std::to_string(b) + " outside [1, 16]", bits_at);
      layer.codebook.bit_length = b;
      const std::size_t k = std::size_t{1} << b;
      r.need(4 * k, "centroids");
      layer.codebook.centroids.resize(k);
      for (std::size_t j = 0; j < k; ++j) layer.codebook.centroids[j] = r.f32("centroid");
      const auto stream = r.take(index_bytes(n, b), "index stream");
      layer.codebook.indices = unpack_indices(stream, n, b);
    } else if (storage == static_cast<std::uint8_t>(Storage::fp32)) {
      layer.storage = Storage::fp32;
      r.need(4 * n, "fp32 values");
      layer.values.resize(n);
      for (std::size_t i = 0; i < n; ++i) layer.values[i] = r.f32("value");
    } else {
      throw FormatError("packed model: unknown storage tag " + std::to_string(storage), storage_at);
    }
    layers.push_back(std::move(layer));
  }
  if (r.offset() != body) throw FormatError("packed model: trailing bytes before CRC", r.offset());
  return layers;
}

std::size_t packed_size(std::span<const PackedLayer> layers) {
  std::size_t n = kHeaderBytes + kCrcBytes;
  for (const auto& layer : layers) {
    n += layer_meta_bytes(layer);
    const std::size_t count = ad::shape_numel(layer.shape);
    if (layer.storage == Storage::codebook)
      n += 4 * (std::size_t{1} << layer.codebook.bit_length) + index_bytes(count, layer.codebook.bit_length);
    else
      n += 4 * count;
  }
  return n;
}

std::size_t packed_size(const QuantizedModel& model) { return packed_size(packed_layers(model)); }

std::filesystem::path meta_path(const std::filesystem::path& model_path) {
  auto p = model_path;
  p += ".json";
  return p;
}

std::string meta_to_json(const ModelMeta& meta) {
  nlohmann::ordered_json j;
  auto& enc = j["encoder"];
  enc["n_mels"] = meta.encoder.n_mels;
  enc["latent_dim"] = meta.encoder.latent_dim;
  enc["activation"] = "gelu";
  enc["conv_layers"] = nlohmann::ordered_json::array();
  for (const auto& c : meta.encoder.conv_layers)
    enc["conv_layers"].push_back({{"kernel", c.kernel}, {"out_channels", c.out_channels}, {"stride", c.stride}});
  enc["ff_layers"] = meta.encoder.ff_layers;
  j["n_classes"] = meta.n_classes;
  j["vocab"] = meta.vocab;
  auto& mel = j["mel"];
  mel["sample_rate"] = meta.mel.sample_rate;
  mel["n_mels"] = meta.mel.n_mels;
  mel["window_ms"] = meta.mel.window_ms;
  mel["hop_ms"] = meta.mel.hop_ms;
  mel["fmin"] = meta.mel.fmin;
  mel["fmax"] = meta.mel.max_frequency();
  mel["log_floor"] = meta.mel.log_floor;
  j["input_frames"] = meta.input_frames;
  return j.dump(2) + "\n";
}

ModelMeta meta_from_json(const std::string& text) {
  ModelMeta meta;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto& enc = j.at("encoder");
    meta.encoder.n_mels = enc.at("n_mels").get<std::size_t>();
    meta.encoder.latent_dim = enc.at("latent_dim").get<std::size_t>();
    for (const auto& c : enc.at("conv_layers"))
      meta.encoder.conv_layers.push_back({c.at("kernel").get<std::size_t>(), c.at("out_channels").get<std::size_t>(),
                                          c.at("stride").get<std::size_t>()});
    meta.encoder.ff_layers = enc.at("ff_layers").get<std::vector<std::size_t>>();
    meta.n_classes = j.at("n_classes").get<std::size_t>();
    meta.vocab = j.at("vocab").get<std::vector<std::string>>();
    const auto& mel = j.at("mel");
    meta.mel.sample_rate = mel.at("sample_rate").get<int>();
    meta.mel.n_mels = mel.at("n_mels").get<std::size_t>();
    meta.mel.window_ms = mel.at("window_ms").get<double>();
    meta.mel.hop_ms = mel.at("hop_ms").get<double>();
    meta.mel.fmin = mel.at("fmin").get<double>();
    meta.mel.fmax = mel.at("fmax").get<double>();
    meta.mel.log_floor = mel.at("log_floor").get<double>();
    meta.input_frames = j.at("input_frames").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("model metadata: ") + e.what());
  }
  return meta;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

namespace {

void write_meta(const ModelMeta& meta, const std::filesystem::path& path) {
  const std::string text = meta_to_json(meta);
  write_file(meta_path(path), std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

ModelMeta read_meta(const std::filesystem::path& path) {
  const auto bytes = read_file(meta_path(path));
  return meta_from_json(std::string(bytes.begin(), bytes.end()));
}

}  // namespace

void save_packed(const QuantizedModel& model, const ModelMeta& meta, const std::filesystem::path& path) {
  const auto layers = packed_layers(model);
  write_file(path, encode_packed(layers));
  write_meta(meta, path);
}

LoadedModel load_packed(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto layers = decode_packed(bytes);
  LoadedModel out;
  out.meta = read_meta(path);
  std::vector<Parameter> params;
  int bits = 32;
  for (const auto& layer : layers) {
    std::vector<double> values;
    if (layer.storage == Storage::codebook) {
      const ad::Tensor w = reconstruct(layer.codebook, layer.shape);
      values.assign(w.data().begin(), w.data().end());
      out.model.codebooks.emplace(layer.id, layer.codebook);
      bits = layer.codebook.bit_length;
    } else {
      values.assign(layer.values.begin(), layer.values.end());
    }
    params.push_back({layer.id, layer.kind, ad::Tensor(layer.shape, std::move(values), false)});
  }
  out.model.base = ModelGraph(out.meta.encoder, out.meta.n_classes, Role::student, std::move(params));
  out.model.bit_length = bits;
  return out;
}

void save_checkpoint(const ModelGraph& model, const ModelMeta& meta, const std::filesystem::path& path) {
  QuantizedModel fp;
  fp.base = model.role() == Role::student ? model : model.as_student();
  fp.bit_length = 32;
  save_packed(fp, meta, path);
}

LoadedModel load_checkpoint(const std::filesystem::path& path, Role role) {
  LoadedModel loaded = load_packed(path);
  if (!loaded.model.codebooks.empty()) throw Error("load_checkpoint: " + path.string() + " is a quantized model");
  if (role == Role::teacher) loaded.model.base = loaded.model.base.as_teacher();
  return loaded;
}

}  // namespace quads::io
