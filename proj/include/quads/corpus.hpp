#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "quads/dsp.hpp"
#include "quads/tensor.hpp"

namespace quads::io {

struct ManifestRow {
  std::string path;  // relative to the manifest's directory unless absolute
  std::string label;

  bool operator==(const ManifestRow&) const = default;
};

struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestRow> rows;

  // Sorted distinct labels; class index = position.
  std::vector<std::string> vocab() const;
  std::filesystem::path resolve(const ManifestRow& row) const;
};

// UTF-8 CSV "path,label" with a header row.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);

// Index of label in vocab; throws naming the label when it is missing.
std::size_t class_index(const std::vector<std::string>& vocab, const std::string& label);

struct ClassSignature {
  double base_hz = 440.0;
  double chirp_hz_per_s = 0.0;
  double attack_s = 0.05;  // linear rise
  double release_s = 0.1;  // linear fall
  double harmonic = 0.3;   // relative amplitude of the second harmonic
};

struct SyntheticCorpusSpec {
  std::size_t n_classes = 4;
  std::size_t samples_per_class = 60;
  int sample_rate = 16000;
  double duration_s = 1.0;
  // Empty: derived from the class index by default_signature().
  std::vector<ClassSignature> signatures;
  double snr_db = 0.0;  // +inf disables noise
  double freq_jitter = 0.06;
  double tone_fraction = 0.6;  // portion of the clip carrying the tone
  std::uint64_t seed = 1;

  void validate() const;
  ClassSignature signature(std::size_t cls) const;
};

ClassSignature default_signature(std::size_t cls);
std::string class_label(std::size_t cls);

// One clip of the corpus as PCM16.
std::vector<std::int16_t> synthesize_clip(const SyntheticCorpusSpec& spec, std::size_t cls, std::size_t sample);

struct CorpusFiles {
  Manifest all;
  Manifest train;
  Manifest val;
  Manifest test;
};

// Writes wav/<label>_<n>.wav plus manifest.csv, train.csv, val.csv and
// test.csv (70/15/15 after a seeded shuffle) under out_dir.
CorpusFiles generate_synthetic_corpus(const SyntheticCorpusSpec& spec, const std::filesystem::path& out_dir);

struct SplitSizes {
  std::size_t train = 0, val = 0, test = 0;
};
SplitSizes split_sizes(std::size_t total);

struct Example {
  ad::Tensor input;  // (frames x n_mels)
  std::size_t label = 0;
};

// Reads every WAV in the manifest and converts it to a model input.
std::vector<Example> load_examples(const Manifest& manifest, const std::vector<std::string>& vocab,
                                   const dsp::MelConfig& mel);

}  // namespace quads::io
