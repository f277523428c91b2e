#include "quads/metrics.hpp"

#include <cmath>

#include "quads/error.hpp"

namespace quads {

double accuracy(std::span<const std::size_t> preds, std::span<const std::size_t> labels) {
  if (preds.empty()) throw Error("accuracy: empty input");
  if (preds.size() != labels.size()) throw Error("accuracy: predictions and labels differ in length");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hits += preds[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double macro_f1(std::span<const std::size_t> preds, std::span<const std::size_t> labels, std::size_t n_classes) {
  if (n_classes < 1) throw Error("macro_f1: n_classes must be >= 1");
  if (preds.size() != labels.size()) throw Error("macro_f1: predictions and labels differ in length");
  if (preds.empty()) throw Error("macro_f1: empty input");
  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] >= n_classes || labels[i] >= n_classes) throw Error("macro_f1: class index out of range");
    if (preds[i] == labels[i]) {
      ++tp[preds[i]];
    } else {
      ++fp[preds[i]];
      ++fn[labels[i]];
    }
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (tp[c] + fp[c] + fn[c] == 0) continue;
    ++counted;
    // 2PR/(P+R) simplifies to 2TP/(2TP+FP+FN).
    total += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
  }
  return total / static_cast<double>(counted);
}

double model_size_mb(double param_count, int bit_length) {
  if (param_count < 0.0 || bit_length < 1) throw Error("model_size_mb: need param_count >= 0 and bit_length >= 1");
  return param_count * static_cast<double>(bit_length) / 8.0 / (1024.0 * 1024.0);
}

double round2(double value) { return std::round(value * 100.0) / 100.0; }

std::vector<LayerMacs> count_macs(const EncoderConfig& cfg, std::size_t n_classes, std::size_t input_frames) {
  cfg.validate();
  if (cfg.output_frames(input_frames) == 0)
    throw Error("count_gmacs: " + std::to_string(input_frames) + " frames do not resolve through the conv stack");
  std::vector<LayerMacs> out;
  std::size_t frames = input_frames;
  std::size_t ch = cfg.n_mels;
  for (std::size_t i = 0; i < cfg.conv_layers.size(); ++i) {
    const auto& c = cfg.conv_layers[i];
    frames = (frames - c.kernel) / c.stride + 1;
    out.push_back({"encoder.conv" + std::to_string(i), c.kernel * ch * c.out_channels * frames});
    ch = c.out_channels;
  }
  for (std::size_t i = 0; i < cfg.ff_layers.size(); ++i) {
    out.push_back({"encoder.ff" + std::to_string(i), ch * cfg.ff_layers[i] * frames});
    ch = cfg.ff_layers[i];
  }
  out.push_back({"encoder.proj", ch * cfg.latent_dim * frames});
  if (n_classes > 0) out.push_back({"head", cfg.latent_dim * n_classes});
  return out;
}

double count_gmacs(const EncoderConfig& cfg, std::size_t n_classes, std::size_t input_frames) {
  std::size_t total = 0;
  for (const auto& layer : count_macs(cfg, n_classes, input_frames)) total += layer.macs;
  return static_cast<double>(total) / 1e9;
}

double count_gmacs(const ModelGraph& model, std::size_t input_frames) {
  return count_gmacs(model.config(), model.n_classes(), input_frames);
}

double energy_proxy(double gmacs, int bit_length, const std::map<int, double>& energy_table) {
  const auto it = energy_table.find(bit_length);
  if (it == energy_table.end())
    throw Error("energy_proxy: no per-MAC energy configured for bit length " + std::to_string(bit_length));
  return gmacs * 1e9 * it->second;
}

}  // namespace quads
