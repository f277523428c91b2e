#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quads/dsp.hpp"
#include "quads/tensor.hpp"

namespace quads {

enum class Activation { gelu };

struct ConvLayerSpec {
  std::size_t kernel = 3;
  std::size_t out_channels = 16;
  std::size_t stride = 1;

  bool operator==(const ConvLayerSpec&) const = default;
};

// conv stack over time -> framewise feed-forward stack -> linear projection
// to latent_dim -> mean over time. Teacher and student configs used together
// must share latent_dim.
struct EncoderConfig {
  std::size_t n_mels = 80;
  std::vector<ConvLayerSpec> conv_layers;
  std::vector<std::size_t> ff_layers;
  std::size_t latent_dim = 16;
  Activation activation = Activation::gelu;

  void validate() const;
  // Frames left after the conv stack; 0 when the input is too short.
  std::size_t output_frames(std::size_t input_frames) const;
  // Smallest input length the conv stack accepts.
  std::size_t min_input_frames() const;

  bool operator==(const EncoderConfig&) const = default;
};

enum class Role : std::uint8_t { teacher, student };

enum class ParamKind : std::uint8_t {
  conv_weight = 0,
  conv_bias = 1,
  dense_weight = 2,
  dense_bias = 3,
  head_weight = 4,
  head_bias = 5,
};

bool is_weight(ParamKind kind);
bool is_head(ParamKind kind);
std::string_view kind_name(ParamKind kind);

struct Parameter {
  std::string id;
  ParamKind kind;
  ad::Tensor value;
};

class ModelGraph {
 public:
  ModelGraph() = default;
  ModelGraph(EncoderConfig config, std::size_t n_classes, Role role, std::vector<Parameter> params);

  const EncoderConfig& config() const { return config_; }
  std::size_t n_classes() const { return n_classes_; }
  Role role() const { return role_; }
  bool has_head() const;

  std::span<const Parameter> parameters() const { return params_; }
  const Parameter& parameter(std::string_view id) const;
  std::size_t index_of(std::string_view id) const;

  // Replaces the values of parameter i. Shape must match; the gradient flag
  // follows the role.
  void set_values(std::size_t i, std::vector<double> values);
  void set_tensor(std::size_t i, ad::Tensor value);

  std::size_t param_count() const;
  std::size_t encoder_param_count() const;

  // Copy with all parameters detached and frozen.
  ModelGraph as_teacher() const;
  // Copy with trainable parameters; requires a head.
  ModelGraph as_student() const;
  // Detached copy that keeps the role, for evaluation without a tape.
  ModelGraph inference_copy() const;

 private:
  EncoderConfig config_;
  std::size_t n_classes_ = 0;
  Role role_ = Role::student;
  std::vector<Parameter> params_;
};

struct InitMode {
  enum class Variant { random, pretrained };
  Variant variant = Variant::random;
  // Source of encoder tensors for the pretrained variant.
  std::optional<ModelGraph> checkpoint;

  static InitMode random() { return {}; }
  static InitMode pretrained(ModelGraph source) { return {Variant::pretrained, std::move(source)}; }
};

// Random mode draws weights from U(-a, a) with a = sqrt(6 / fan_in) (so the
// standard deviation is sqrt(2 / fan_in)) and zero biases. Pretrained mode
// copies encoder tensors from the checkpoint and draws a fresh head. Values
// are rounded to fp32.
ModelGraph initialize(const EncoderConfig& cfg, std::size_t n_classes, const InitMode& mode,
                      std::uint64_t seed, Role role = Role::student);

// Converts an (n_mels x frames) spectrogram into the time-major model input.
ad::Tensor model_input(const dsp::MelSpectrogram& mel);

// z in R^latent_dim. Tape entries are recorded only for trainable parameters.
ad::Tensor forward_features(ad::Tape& tape, const ModelGraph& model, const ad::Tensor& input);
ad::Tensor forward_features(ad::Tape& tape, const ModelGraph& model, const dsp::MelSpectrogram& mel);

// logits = z . head.weight + head.bias; no softmax.
ad::Tensor forward_logits(ad::Tape& tape, const ModelGraph& model, const ad::Tensor& input);

struct BatchOutput {
  ad::Tensor features;  // (batch x latent_dim)
  ad::Tensor logits;    // (batch x n_classes), undefined without a head
};

BatchOutput forward_batch(ad::Tape& tape, const ModelGraph& model, std::span<const ad::Tensor> inputs);

// Argmax of the logits for every input.
std::vector<std::size_t> predict(const ModelGraph& model, std::span<const ad::Tensor> inputs);

// Scales the config's widths: every conv out_channels and ff width times
// factor, latent_dim unchanged.
EncoderConfig widen(const EncoderConfig& cfg, std::size_t factor);

}  // namespace quads
