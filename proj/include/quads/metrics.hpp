#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "quads/model.hpp"

namespace quads {

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels);

// Unweighted mean of per-class F1. A class that never occurs in the labels and
// is never predicted is left out of the mean; every other class counts, with
// F1 = 0 when it has no true positives.
double macro_f1(std::span<const std::size_t> preds, std::span<const std::size_t> labels, std::size_t n_classes);

// param_count * bit_length / 8 / 1024^2 (MiB).
double model_size_mb(double param_count, int bit_length);

// Rounds to two decimals for reporting.
double round2(double value);

struct LayerMacs {
  std::string id;
  std::size_t macs = 0;
};

// Multiply-accumulates for one inference over input_frames mel frames:
// conv = kernel * c_in * c_out * out_frames, framewise dense = fan_in *
// fan_out * frames, head = fan_in * fan_out on the pooled vector. Depends on
// shapes only.
std::vector<LayerMacs> count_macs(const EncoderConfig& cfg, std::size_t n_classes, std::size_t input_frames);
double count_gmacs(const ModelGraph& model, std::size_t input_frames);
double count_gmacs(const EncoderConfig& cfg, std::size_t n_classes, std::size_t input_frames);

// gmacs * 1e9 * energy_table[bit_length]. No default table is shipped.
double energy_proxy(double gmacs, int bit_length, const std::map<int, double>& energy_table);

struct EfficiencyReport {
  std::size_t param_count = 0;
  int bit_length = 32;
  double size_mb_nominal = 0.0;
  double size_mb_serialized = 0.0;
  double gmacs = 0.0;
  std::size_t codebook_entries = 0;
  std::optional<double> energy_proxy;
};

}  // namespace quads
