#include "quads/model.hpp"

#include <algorithm>
#include <cmath>

#include "quads/error.hpp"
#include "quads/ops.hpp"
#include "quads/rng.hpp"

namespace quads {

void EncoderConfig::validate() const {
  if (n_mels < 1) throw Error("encoder config: n_mels must be >= 1");
  if (latent_dim < 1) throw Error("encoder config: latent_dim must be >= 1");
  for (std::size_t i = 0; i < conv_layers.size(); ++i) {
    const auto& c = conv_layers[i];
    if (c.kernel < 1 || c.out_channels < 1 || c.stride < 1)
      throw Error("encoder config: conv layer " + std::to_string(i) + " needs kernel, channels, stride >= 1");
  }
  for (std::size_t i = 0; i < ff_layers.size(); ++i)
    if (ff_layers[i] < 1) throw Error("encoder config: ff layer " + std::to_string(i) + " has zero width");
}

std::size_t EncoderConfig::output_frames(std::size_t input_frames) const {
  std::size_t t = input_frames;
  for (const auto& c : conv_layers) {
    if (t < c.kernel) return 0;
    t = (t - c.kernel) / c.stride + 1;
  }
  return t;
}

std::size_t EncoderConfig::min_input_frames() const {
  std::size_t t = 1;
  for (auto it = conv_layers.rbegin(); it != conv_layers.rend(); ++it) t = (t - 1) * it->stride + it->kernel;
  return t;
}

bool is_weight(ParamKind kind) {
  return kind == ParamKind::conv_weight || kind == ParamKind::dense_weight || kind == ParamKind::head_weight;
}

bool is_head(ParamKind kind) { return kind == ParamKind::head_weight || kind == ParamKind::head_bias; }

std::string_view kind_name(ParamKind kind) {
  switch (kind) {
    case ParamKind::conv_weight: return "conv_weight";
    case ParamKind::conv_bias: return "conv_bias";
    case ParamKind::dense_weight: return "dense_weight";
    case ParamKind::dense_bias: return "dense_bias";
    case ParamKind::head_weight: return "head_weight";
    case ParamKind::head_bias: return "head_bias";
  }
  return "unknown";
}

namespace {

struct Slot {
  std::string id;
  ParamKind kind;
  ad::Shape shape;
  std::size_t fan_in;
};

// Parameter layout implied by a config, in forward order.
std::vector<Slot> layout(const EncoderConfig& cfg, std::size_t n_classes) {
  std::vector<Slot> slots;
  std::size_t ch = cfg.n_mels;
  for (std::size_t i = 0; i < cfg.conv_layers.size(); ++i) {
    const auto& c = cfg.conv_layers[i];
    const std::string base = "encoder.conv" + std::to_string(i);
    slots.push_back({base + ".weight", ParamKind::conv_weight, {c.out_channels, ch, c.kernel}, ch * c.kernel});
    slots.push_back({base + ".bias", ParamKind::conv_bias, {c.out_channels}, ch * c.kernel});
    ch = c.out_channels;
  }
  for (std::size_t i = 0; i < cfg.ff_layers.size(); ++i) {
    const std::string base = "encoder.ff" + std::to_string(i);
    slots.push_back({base + ".weight", ParamKind::dense_weight, {ch, cfg.ff_layers[i]}, ch});
    slots.push_back({base + ".bias", ParamKind::dense_bias, {cfg.ff_layers[i]}, ch});
    ch = cfg.ff_layers[i];
  }
  slots.push_back({"encoder.proj.weight", ParamKind::dense_weight, {ch, cfg.latent_dim}, ch});
  slots.push_back({"encoder.proj.bias", ParamKind::dense_bias, {cfg.latent_dim}, ch});
  if (n_classes > 0) {
    slots.push_back({"head.weight", ParamKind::head_weight, {cfg.latent_dim, n_classes}, cfg.latent_dim});
    slots.push_back({"head.bias", ParamKind::head_bias, {n_classes}, cfg.latent_dim});
  }
  return slots;
}

ad::Tensor draw(const Slot& slot, std::uint64_t seed, std::size_t stream, bool requires_grad) {
  std::vector<double> values(ad::shape_numel(slot.shape), 0.0);
  if (is_weight(slot.kind)) {
    const double bound = std::sqrt(6.0 / static_cast<double>(slot.fan_in));
    CounterRng rng(seed, stream);
    for (double& v : values) v = static_cast<float>(rng.uniform(-bound, bound));
  }
  return ad::Tensor(slot.shape, std::move(values), requires_grad);
}

}  // namespace

ModelGraph::ModelGraph(EncoderConfig config, std::size_t n_classes, Role role, std::vector<Parameter> params)
    : config_(std::move(config)), n_classes_(n_classes), role_(role), params_(std::move(params)) {
  config_.validate();
  const auto slots = layout(config_, n_classes_);
  if (slots.size() != params_.size())
    throw Error("model: expected " + std::to_string(slots.size()) + " parameter tensors, got " +
                std::to_string(params_.size()));
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i].id != params_[i].id || slots[i].kind != params_[i].kind ||
        slots[i].shape != params_[i].value.shape())
      throw Error("model: parameter " + std::to_string(i) + " is " + params_[i].id + " " +
                  ad::shape_string(params_[i].value.shape()) + ", expected " + slots[i].id + " " +
                  ad::shape_string(slots[i].shape));
    const bool trainable = role_ == Role::student;
    if (params_[i].value.requires_grad() != trainable)
      params_[i].value = ad::Tensor(params_[i].value.shape(),
                                    {params_[i].value.data().begin(), params_[i].value.data().end()}, trainable);
  }
  if (role_ == Role::student && !has_head()) throw Error("model: a student needs a classifier head");
}

bool ModelGraph::has_head() const { return n_classes_ > 0; }

const Parameter& ModelGraph::parameter(std::string_view id) const { return params_[index_of(id)]; }

std::size_t ModelGraph::index_of(std::string_view id) const {
  for (std::size_t i = 0; i < params_.size(); ++i)
    if (params_[i].id == id) return i;
  throw Error("model: no parameter named " + std::string(id));
}

void ModelGraph::set_values(std::size_t i, std::vector<double> values) {
  auto& p = params_.at(i);
  p.value = ad::Tensor(p.value.shape(), std::move(values), role_ == Role::student);
}

void ModelGraph::set_tensor(std::size_t i, ad::Tensor value) {
  auto& p = params_.at(i);
  if (value.shape() != p.value.shape())
    throw Error("model: " + p.id + " expects " + ad::shape_string(p.value.shape()) + ", got " +
                ad::shape_string(value.shape()));
  p.value = std::move(value);
}

std::size_t ModelGraph::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.numel();
  return n;
}

std::size_t ModelGraph::encoder_param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (!is_head(p.kind)) n += p.value.numel();
  return n;
}

ModelGraph ModelGraph::as_teacher() const { return ModelGraph(config_, n_classes_, Role::teacher, params_); }

ModelGraph ModelGraph::as_student() const { return ModelGraph(config_, n_classes_, Role::student, params_); }

ModelGraph ModelGraph::inference_copy() const {
  ModelGraph copy = *this;
  for (auto& p : copy.params_) p.value = p.value.detach();
  return copy;
}

ModelGraph initialize(const EncoderConfig& cfg, std::size_t n_classes, const InitMode& mode, std::uint64_t seed,
                      Role role) {
  cfg.validate();
  const auto slots = layout(cfg, n_classes);
  const bool trainable = role == Role::student;
  std::vector<Parameter> params;
  params.reserve(slots.size());

  if (mode.variant == InitMode::Variant::pretrained) {
    if (!mode.checkpoint) throw Error("initialize: pretrained mode without a checkpoint");
    const auto source = mode.checkpoint->parameters();
    for (std::size_t i = 0; i < slots.size(); ++i) {
      const auto& slot = slots[i];
      if (is_head(slot.kind)) {
        params.push_back({slot.id, slot.kind, draw(slot, seed, i, trainable)});
        continue;
      }
      const auto it = std::find_if(source.begin(), source.end(), [&](const Parameter& p) { return p.id == slot.id; });
      if (it == source.end())
        throw Error("initialize: checkpoint has no layer " + slot.id);
      if (it->value.shape() != slot.shape)
        throw Error("initialize: checkpoint layer " + slot.id + " has shape " + ad::shape_string(it->value.shape()) +
                    ", config expects " + ad::shape_string(slot.shape));
      params.push_back({slot.id, slot.kind,
                        ad::Tensor(slot.shape, {it->value.data().begin(), it->value.data().end()}, trainable)});
    }
  } else {
    for (std::size_t i = 0; i < slots.size(); ++i)
      params.push_back({slots[i].id, slots[i].kind, draw(slots[i], seed, i, trainable)});
  }
  return ModelGraph(cfg, n_classes, role, std::move(params));
}

ad::Tensor model_input(const dsp::MelSpectrogram& mel) {
  std::vector<double> values(mel.values.size());
  for (std::size_t m = 0; m < mel.n_mels; ++m)
    for (std::size_t t = 0; t < mel.frames; ++t) values[t * mel.n_mels + m] = mel.values[m * mel.frames + t];
  return ad::Tensor({mel.frames, mel.n_mels}, std::move(values), false);
}

ad::Tensor forward_features(ad::Tape& tape, const ModelGraph& model, const ad::Tensor& input) {
  const auto& cfg = model.config();
  if (input.rank() != 2 || input.dim(1) != cfg.n_mels)
    throw Error("forward_features: input " + ad::shape_string(input.shape()) + " does not have " +
                std::to_string(cfg.n_mels) + " mel channels");
  if (cfg.output_frames(input.dim(0)) == 0)
    throw Error("forward_features: input has " + std::to_string(input.dim(0)) + " frames, the conv stack needs " +
                std::to_string(cfg.min_input_frames()));
  const auto params = model.parameters();
  std::size_t p = 0;
  ad::Tensor h = input;
  for (const auto& conv : cfg.conv_layers) {
    h = ad::conv1d(tape, h, params[p].value, conv.stride);
    h = ad::gelu(tape, ad::add(tape, h, params[p + 1].value));
    p += 2;
  }
  for (std::size_t i = 0; i < cfg.ff_layers.size(); ++i) {
    h = ad::gelu(tape, ad::add(tape, ad::matmul(tape, h, params[p].value), params[p + 1].value));
    p += 2;
  }
  h = ad::add(tape, ad::matmul(tape, h, params[p].value), params[p + 1].value);
  return ad::mean_pool_time(tape, h);
}

ad::Tensor forward_features(ad::Tape& tape, const ModelGraph& model, const dsp::MelSpectrogram& mel) {
  return forward_features(tape, model, model_input(mel));
}

namespace {

ad::Tensor head_logits(ad::Tape& tape, const ModelGraph& model, const ad::Tensor& features) {
  const auto& w = model.parameter("head.weight").value;
  const auto& b = model.parameter("head.bias").value;
  return ad::add(tape, ad::matmul(tape, features, w), b);
}

}  // namespace

ad::Tensor forward_logits(ad::Tape& tape, const ModelGraph& model, const ad::Tensor& input) {
  if (model.role() != Role::student) throw Error("forward_logits: only a student model has a classification path");
  const ad::Tensor z = forward_features(tape, model, input);
  const ad::Tensor logits = head_logits(tape, model, ad::stack_rows(tape, {z}));
  return ad::reshape(tape, logits, {model.n_classes()});
}

BatchOutput forward_batch(ad::Tape& tape, const ModelGraph& model, std::span<const ad::Tensor> inputs) {
  std::vector<ad::Tensor> rows;
  rows.reserve(inputs.size());
  for (const auto& x : inputs) rows.push_back(forward_features(tape, model, x));
  BatchOutput out;
  out.features = ad::stack_rows(tape, rows);
  if (model.has_head()) out.logits = head_logits(tape, model, out.features);
  return out;
}

std::vector<std::size_t> predict(const ModelGraph& model, std::span<const ad::Tensor> inputs) {
  if (!model.has_head()) throw Error("predict: model has no classifier head");
  const ModelGraph frozen = model.inference_copy();
  std::vector<std::size_t> out;
  out.reserve(inputs.size());
  ad::Tape tape;
  for (const auto& x : inputs) {
    const ad::Tensor z = forward_features(tape, frozen, x);
    const ad::Tensor logits = head_logits(tape, frozen, ad::stack_rows(tape, {z}));
    const auto v = logits.data();
    out.push_back(static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin()));
  }
  return out;
}

EncoderConfig widen(const EncoderConfig& cfg, std::size_t factor) {
  EncoderConfig out = cfg;
  for (auto& c : out.conv_layers) c.out_channels *= factor;
  for (auto& w : out.ff_layers) w *= factor;
  return out;
}

}  // namespace quads
