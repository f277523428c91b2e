#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "quads/corpus.hpp"
#include "quads/dsp.hpp"
#include "quads/model.hpp"
#include "quads/trainer.hpp"

namespace quads {

enum class Strategy { distill, quant_after, mct };

std::string_view strategy_name(Strategy s);
Strategy parse_strategy(std::string_view name);

// Everything a command needs. Loaded from an INI file ([section] key = value);
// CLI flags override individual keys afterwards.
struct RunConfig {
  // Output root; empty means $QUADS_RUN_DIR, then ./runs.
  std::filesystem::path root;
  // Empty means <root>/corpus and <root>/teacher/teacher.qdsm.
  std::filesystem::path corpus_dir;
  std::filesystem::path teacher_path;

  io::SyntheticCorpusSpec corpus;
  dsp::MelConfig mel;

  EncoderConfig teacher;
  EncoderConfig student;
  SupervisedOptions teacher_training;
  SupervisedOptions pretraining;

  MctSchedule schedule;
  // 1..16 trains codebooks; 32 keeps the student in fp32 (distillation only).
  int bits = 4;
  bool pretrained_init = false;
  Strategy strategy = Strategy::mct;

  std::vector<std::uint64_t> ablation_seeds{0, 1, 2};
  std::vector<int> ablation_bits{16, 4};

  // bit length -> energy per MAC (user units); empty disables the proxy.
  std::map<int, double> energy_table;

  RunConfig();

  void validate() const;
  std::filesystem::path resolved_root() const;
  std::filesystem::path resolved_corpus_dir() const;
  std::filesystem::path resolved_teacher_path() const;
  // Schedule with bit_length and seed applied.
  MctSchedule resolved_schedule() const;
  // Frames of the fixed-length corpus clips after the frontend.
  std::size_t input_frames() const;
};

// Parses INI text; unknown sections or keys and malformed values throw Error
// naming the key.
RunConfig parse_config(const std::string& text, const RunConfig& defaults = RunConfig());
RunConfig load_config(const std::filesystem::path& path);
// Full INI listing of every key; parse_config(to_ini(c)) == c.
std::string to_ini(const RunConfig& cfg);

// Applies one "section.key" = value override.
void set_config_value(RunConfig& cfg, const std::string& dotted_key, const std::string& value);

// "3:32:2,3:32:2" <-> conv specs (kernel:channels:stride); "64,64" <-> widths.
std::vector<ConvLayerSpec> parse_conv_layers(const std::string& text);
std::string format_conv_layers(const std::vector<ConvLayerSpec>& layers);

}  // namespace quads
