#include "quads/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "quads/error.hpp"
#include "quads/metrics.hpp"
#include "quads/ops.hpp"
#include "quads/rng.hpp"

namespace quads {

std::string_view phase_name(Phase phase) {
  switch (phase) {
    case Phase::distill: return "distill";
    case Phase::quantize: return "quantize";
    case Phase::final_quantize: return "final_quantize";
  }
  return "unknown";
}

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::adam;
  if (name == "sgd") return OptimizerKind::sgd;
  throw Error("unknown optimizer \"" + std::string(name) + "\" (expected adam or sgd)");
}

void MctSchedule::validate() const {
  if (cycles < 1) throw Error("schedule: cycles must be >= 1");
  if (distill_epochs < 1 || quant_epochs < 1 || final_quant_epochs < 1)
    throw Error("schedule: every phase needs at least one epoch");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("schedule: alpha must lie in [0, 1]");
  if (bit_length < 1 || bit_length > kMaxCodebookBits)
    throw Error("schedule: bit length " + std::to_string(bit_length) + " outside [1, 16] for codebook training");
  if (batch_size < 1) throw Error("schedule: batch_size must be >= 1");
  if (lr_encoder < 0.0 || lr_classifier < 0.0 || lr_codebook < 0.0)
    throw Error("schedule: learning rates must be non-negative");
}

std::vector<double> Optimizer::direction(const std::string& key, std::span<const double> grad) {
  if (kind_ == OptimizerKind::sgd) return {grad.begin(), grad.end()};
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  auto& mo = moments_[key];
  if (mo.m.size() != grad.size()) {
    mo.m.assign(grad.size(), 0.0);
    mo.v.assign(grad.size(), 0.0);
    mo.steps = 0;
  }
  ++mo.steps;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(mo.steps));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(mo.steps));
  std::vector<double> d(grad.size());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    mo.m[i] = b1 * mo.m[i] + (1.0 - b1) * grad[i];
    mo.v[i] = b2 * mo.v[i] + (1.0 - b2) * grad[i] * grad[i];
    d[i] = (mo.m[i] / c1) / (std::sqrt(mo.v[i] / c2) + eps);
  }
  return d;
}

ModelGraph TrainState::effective_model() const {
  if (phase == Phase::distill || !quantized) return student;
  QuantizedModel view = *quantized;
  view.base = student;
  view.sync_base();
  return view.base;
}

std::vector<ad::Tensor> teacher_features(const ModelGraph& teacher, std::span<const io::Example> examples) {
  const ModelGraph frozen = teacher.inference_copy();
  std::vector<ad::Tensor> out;
  out.reserve(examples.size());
  ad::Tape tape;
  for (const auto& ex : examples) out.push_back(forward_features(tape, frozen, ex.input));
  return out;
}

EvalResult evaluate(const ModelGraph& model, std::span<const io::Example> examples, std::size_t n_classes) {
  std::vector<ad::Tensor> inputs;
  std::vector<std::size_t> labels;
  inputs.reserve(examples.size());
  for (const auto& ex : examples) {
    inputs.push_back(ex.input);
    labels.push_back(ex.label);
  }
  EvalResult r;
  r.predictions = predict(model, inputs);
  r.accuracy = accuracy(r.predictions, labels);
  r.f1 = macro_f1(r.predictions, labels, n_classes);
  return r;
}

namespace {

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                   std::uint64_t stream) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  CounterRng rng(seed, stream);
  shuffle(order, rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  return batches;
}

std::uint64_t epoch_stream(Phase phase, int cycle, int epoch) {
  return (static_cast<std::uint64_t>(phase) + 1) << 40 | static_cast<std::uint64_t>(cycle) << 20 |
         static_cast<std::uint64_t>(epoch);
}

[[noreturn]] void non_finite(std::string_view what, Phase phase, int cycle, int epoch, std::size_t batch,
                             const std::vector<std::size_t>& members) {
  std::ostringstream os;
  os << what << " is not finite in " << phase_name(phase) << " phase (cycle " << cycle << ", epoch " << epoch
     << ", batch " << batch << ", examples";
  for (std::size_t m : members) os << ' ' << m;
  os << ')';
  throw NumericalError(os.str());
}

double lr_for(ParamKind kind, const MctSchedule& sched) {
  return is_head(kind) ? sched.lr_classifier : sched.lr_encoder;
}

// values <- fp32(values - lr * direction)
std::vector<double> descend(std::span<const double> values, std::span<const double> dir, double lr) {
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = static_cast<float>(values[i] - lr * dir[i]);
  return out;
}

std::vector<double> grad_or_zero(const ad::Tensor& t) {
  if (t.has_grad()) return {t.grad().begin(), t.grad().end()};
  return std::vector<double>(t.numel(), 0.0);
}

void check_grad(const std::vector<double>& g, const std::string& id, Phase phase, int cycle, int epoch,
                std::size_t batch, const std::vector<std::size_t>& members) {
  for (double v : g)
    if (!std::isfinite(v)) non_finite("gradient of " + id, phase, cycle, epoch, batch, members);
}

void report(const TrainHooks& hooks, const EpochRecord& rec) {
  if (!hooks.progress) return;
  auto& os = *hooks.progress;
  os << std::fixed << std::setprecision(5) << "cycle " << rec.cycle << ' ' << phase_name(rec.phase) << " epoch "
     << rec.epoch << " gamma=" << rec.losses.gamma << " l1=" << rec.losses.l1 << " l_gt=" << rec.losses.l_gt
     << " l_dis=" << rec.losses.l_dis << " l_centroid=" << rec.losses.l_centroid << " l_quant=" << rec.losses.l_quant
     << " total=" << rec.losses.total << " acc=" << rec.accuracy << " f1=" << rec.f1 << '\n';
  os.flush();
  os.unsetf(std::ios::floatfield);
}

ModelGraph fresh_student(const EncoderConfig& cfg, const InitMode& init, const TrainData& data,
                         const MctSchedule& sched) {
  return initialize(cfg, data.n_classes, init, sched.seed, Role::student);
}

void check_data(const TrainData& data) {
  if (data.train.empty()) throw Error("training data is empty");
  if (data.val.empty()) throw Error("validation data is empty");
  if (data.n_classes < 1) throw Error("training data has no classes");
}

}  // namespace

TrainState run_distill_phase(TrainState state, std::span<const ad::Tensor> teacher_z, const TrainData& data,
                             const MctSchedule& sched, const TrainHooks& hooks, int epochs) {
  check_data(data);
  if (teacher_z.size() != data.train.size()) throw Error("distill phase: teacher features do not cover the train set");
  if (epochs < 0) epochs = sched.distill_epochs;
  state.phase = Phase::distill;
  Optimizer opt(sched.optimizer);

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const auto batches =
        make_batches(data.train.size(), sched.batch_size, sched.seed, epoch_stream(Phase::distill, state.cycle_index, epoch));
    double sum_l1 = 0.0, sum_gt = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& members = batches[b];
      std::vector<ad::Tensor> inputs, zt;
      std::vector<std::size_t> labels;
      for (std::size_t i : members) {
        inputs.push_back(data.train[i].input);
        labels.push_back(data.train[i].label);
        zt.push_back(teacher_z[i]);
      }
      ad::Tape tape;
      const BatchOutput out = forward_batch(tape, state.student, inputs);
      const ad::Tensor l1 = l1_feature_loss(tape, ad::stack_rows(tape, zt), out.features);
      const ad::Tensor l_gt = cross_entropy(tape, out.logits, labels);
      const ad::Tensor total = combined_loss([&] { return distillation_loss(tape, l1, l_gt, sched.alpha); },
                                             [&]() -> ad::Tensor { throw Error("quantization branch evaluated at gamma=1"); },
                                             1.0);
      if (!std::isfinite(total.item()))
        non_finite("distillation loss", Phase::distill, state.cycle_index, epoch, b, members);
      tape.backward(total);

      const auto params = state.student.parameters();
      std::vector<std::vector<double>> updates(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto g = grad_or_zero(params[i].value);
        check_grad(g, params[i].id, Phase::distill, state.cycle_index, epoch, b, members);
        const auto dir = opt.direction(params[i].id, g);
        updates[i] = descend(params[i].value.data(), dir, lr_for(params[i].kind, sched));
      }
      for (std::size_t i = 0; i < updates.size(); ++i) state.student.set_values(i, std::move(updates[i]));

      sum_l1 += l1.item();
      sum_gt += l_gt.item();
      if (hooks.on_step) hooks.on_step(state, {Phase::distill, state.cycle_index, epoch, b});
    }
    const double nb = static_cast<double>(batches.size());
    EpochRecord rec;
    rec.cycle = state.cycle_index;
    rec.phase = Phase::distill;
    rec.epoch = epoch;
    rec.losses = LossBreakdown::from_terms(sum_l1 / nb, sum_gt / nb, 0.0, sched.alpha, 1);
    const EvalResult ev = evaluate(state.student, data.val, data.n_classes);
    rec.accuracy = ev.accuracy;
    rec.f1 = ev.f1;
    state.history.push_back(rec);
    report(hooks, rec);
  }
  return state;
}

TrainState run_distill_phase(TrainState state, const ModelGraph& teacher, const TrainData& data,
                             const MctSchedule& sched, const TrainHooks& hooks) {
  if (teacher.role() != Role::teacher) throw Error("distill phase: the teacher must be frozen");
  const auto z = teacher_features(teacher, data.train);
  return run_distill_phase(std::move(state), z, data, sched, hooks);
}

TrainState run_quant_phase(TrainState state, const TrainData& data, const MctSchedule& sched, const TrainHooks& hooks,
                           bool final_phase) {
  check_data(data);
  sched.validate();
  const Phase phase = final_phase ? Phase::final_quantize : Phase::quantize;
  const int epochs = final_phase ? sched.final_quant_epochs : sched.quant_epochs;
  state.phase = phase;

  if (!state.quantized) {
    state.quantized = quantize_model(state.student, sched.bit_length, sched.policy, sched.seed, sched.kmeans);
  } else if (sched.refit_codebooks) {
    const auto params = state.student.parameters();
    for (auto& [id, cb] : state.quantized->codebooks) {
      cb = kmeans_refit(params[state.student.index_of(id)].value.data(), cb, sched.kmeans.max_iters);
      round_to_float(cb.centroids);
    }
  }
  state.quantized->base = state.student;
  state.quantized->sync_base();

  Optimizer opt(sched.optimizer);
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    const auto batches =
        make_batches(data.train.size(), sched.batch_size, sched.seed, epoch_stream(phase, state.cycle_index, epoch));
    double sum_gt = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const auto& members = batches[b];
      std::vector<ad::Tensor> inputs;
      std::vector<std::size_t> labels;
      for (std::size_t i : members) {
        inputs.push_back(data.train[i].input);
        labels.push_back(data.train[i].label);
      }

      // Forward through W_hat = C[I]; reconstructed tensors are the leaves
      // whose gradients are folded into the centroids.
      ModelGraph view = state.student;
      const auto params = state.student.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto it = state.quantized->codebooks.find(params[i].id);
        if (it == state.quantized->codebooks.end()) continue;
        const ad::Tensor w = reconstruct(it->second, params[i].value.shape());
        view.set_tensor(i, ad::Tensor(w.shape(), {w.data().begin(), w.data().end()}, true));
      }

      ad::Tape tape;
      const BatchOutput out = forward_batch(tape, view, inputs);
      const ad::Tensor l_gt = cross_entropy(tape, out.logits, labels);
      const ad::Tensor total = combined_loss(
          [&]() -> ad::Tensor { throw Error("distillation branch evaluated at gamma=0"); },
          [&] { return sched.double_count_task_loss ? quantization_loss(tape, l_gt, l_gt) : l_gt; }, 0.0);
      if (!std::isfinite(total.item())) non_finite("quantization loss", phase, state.cycle_index, epoch, b, members);
      tape.backward(total);

      const auto vparams = view.parameters();
      std::vector<std::pair<std::size_t, std::vector<double>>> exempt_updates;
      for (std::size_t i = 0; i < vparams.size(); ++i) {
        const auto g = grad_or_zero(vparams[i].value);
        check_grad(g, vparams[i].id, phase, state.cycle_index, epoch, b, members);
        const auto it = state.quantized->codebooks.find(vparams[i].id);
        if (it != state.quantized->codebooks.end()) {
          LayerCodebook& cb = it->second;
          const auto grad_c = centroid_gradient(g, cb.indices, cb.k());
          const auto dir = opt.direction("codebook:" + vparams[i].id, grad_c);
          cb = apply_codebook_step(cb, dir, sched.lr_codebook);
          round_to_float(cb.centroids);
        } else {
          const auto dir = opt.direction(vparams[i].id, g);
          exempt_updates.emplace_back(i, descend(vparams[i].value.data(), dir, lr_for(vparams[i].kind, sched)));
        }
      }
      for (auto& [i, values] : exempt_updates) state.student.set_values(i, std::move(values));

      sum_gt += l_gt.item();
      if (hooks.on_step) hooks.on_step(state, {phase, state.cycle_index, epoch, b});
    }
    const double nb = static_cast<double>(batches.size());
    EpochRecord rec;
    rec.cycle = state.cycle_index;
    rec.phase = phase;
    rec.epoch = epoch;
    // The task loss through the reconstructed weights is both l_centroid and
    // l_gt; l1 is not evaluated in this phase.
    rec.losses = LossBreakdown::from_terms(0.0, sum_gt / nb, sum_gt / nb, sched.alpha, 0);
    const EvalResult ev = evaluate(state.effective_model(), data.val, data.n_classes);
    rec.accuracy = ev.accuracy;
    rec.f1 = ev.f1;
    state.history.push_back(rec);
    report(hooks, rec);
  }

  // Materialize: the student continues from the reconstructed weights.
  state.quantized->base = state.student;
  state.quantized->sync_base();
  state.student = state.quantized->base;
  return state;
}

TrainResult mct_train(const ModelGraph& teacher, const EncoderConfig& student_cfg, const InitMode& init,
                      const TrainData& data, const MctSchedule& sched, const TrainHooks& hooks) {
  sched.validate();
  check_data(data);
  if (teacher.role() != Role::teacher) throw Error("mct_train: the teacher must be frozen");
  if (teacher.config().latent_dim != student_cfg.latent_dim)
    throw Error("mct_train: teacher and student latent sizes differ");
  const auto z = teacher_features(teacher, data.train);

  TrainState state;
  state.student = fresh_student(student_cfg, init, data, sched);
  for (int c = 1; c <= sched.cycles; ++c) {
    state.cycle_index = c;
    state = run_distill_phase(std::move(state), z, data, sched, hooks);
    state = run_quant_phase(std::move(state), data, sched, hooks, false);
  }
  state = run_quant_phase(std::move(state), data, sched, hooks, true);
  return {std::move(*state.quantized), std::move(state.history)};
}

DistillResult distill_only(const ModelGraph& teacher, const EncoderConfig& student_cfg, const InitMode& init,
                           const TrainData& data, const MctSchedule& sched, const TrainHooks& hooks) {
  check_data(data);
  if (teacher.role() != Role::teacher) throw Error("distill_only: the teacher must be frozen");
  if (sched.cycles < 1 || sched.distill_epochs < 1) throw Error("distill_only: needs at least one distillation epoch");
  const auto z = teacher_features(teacher, data.train);
  TrainState state;
  state.student = fresh_student(student_cfg, init, data, sched);
  state.cycle_index = 1;
  state = run_distill_phase(std::move(state), z, data, sched, hooks, sched.cycles * sched.distill_epochs);
  return {std::move(state.student), std::move(state.history)};
}

TrainResult baseline_quantize_after_distill(const ModelGraph& teacher, const EncoderConfig& student_cfg,
                                            const InitMode& init, const TrainData& data, const MctSchedule& sched,
                                            const TrainHooks& hooks) {
  sched.validate();
  DistillResult distilled = distill_only(teacher, student_cfg, init, data, sched, hooks);
  QuantizedModel q = quantize_model(distilled.student, sched.bit_length, sched.policy, sched.seed, sched.kmeans);
  return {std::move(q), std::move(distilled.history)};
}

SupervisedResult train_supervised(const ModelGraph& init, const TrainData& data, const SupervisedOptions& opts,
                                  const TrainHooks& hooks) {
  check_data(data);
  if (init.role() != Role::student) throw Error("train_supervised: expects a trainable model");
  if (opts.max_epochs < 0 || opts.patience < 1 || opts.batch_size < 1 || opts.lr < 0.0)
    throw Error("train_supervised: invalid options");

  SupervisedResult result{init, {}, 0.0, 0};
  if (opts.max_epochs == 0) return result;
  result.best_val_accuracy = -1.0;
  ModelGraph model = init;
  Optimizer opt(opts.optimizer);
  int since_best = 0;
  for (int epoch = 1; epoch <= opts.max_epochs; ++epoch) {
    const auto batches = make_batches(data.train.size(), opts.batch_size, opts.seed, epoch_stream(Phase::distill, 0, epoch));
    double sum_gt = 0.0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<ad::Tensor> inputs;
      std::vector<std::size_t> labels;
      for (std::size_t i : batches[b]) {
        inputs.push_back(data.train[i].input);
        labels.push_back(data.train[i].label);
      }
      ad::Tape tape;
      const BatchOutput out = forward_batch(tape, model, inputs);
      const ad::Tensor loss = cross_entropy(tape, out.logits, labels);
      if (!std::isfinite(loss.item())) non_finite("cross-entropy", Phase::distill, 0, epoch, b, batches[b]);
      tape.backward(loss);
      const auto params = model.parameters();
      std::vector<std::vector<double>> updates(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto g = grad_or_zero(params[i].value);
        check_grad(g, params[i].id, Phase::distill, 0, epoch, b, batches[b]);
        updates[i] = descend(params[i].value.data(), opt.direction(params[i].id, g), opts.lr);
      }
      for (std::size_t i = 0; i < updates.size(); ++i) model.set_values(i, std::move(updates[i]));
      sum_gt += loss.item();
    }
    EpochRecord rec;
    rec.cycle = 0;
    rec.phase = Phase::distill;
    rec.epoch = epoch;
    rec.losses = LossBreakdown::from_terms(0.0, sum_gt / static_cast<double>(batches.size()), 0.0, 0.0, 1);
    const EvalResult ev = evaluate(model, data.val, data.n_classes);
    rec.accuracy = ev.accuracy;
    rec.f1 = ev.f1;
    result.history.push_back(rec);
    report(hooks, rec);
    if (ev.accuracy > result.best_val_accuracy) {
      result.best_val_accuracy = ev.accuracy;
      result.best_epoch = epoch;
      result.model = model;
      since_best = 0;
    } else if (++since_best >= opts.patience) {
      break;
    }
  }
  return result;
}

std::vector<int> expected_gamma_sequence(const MctSchedule& sched) {
  std::vector<int> seq;
  for (int c = 0; c < sched.cycles; ++c) {
    seq.insert(seq.end(), static_cast<std::size_t>(sched.distill_epochs), 1);
    seq.insert(seq.end(), static_cast<std::size_t>(sched.quant_epochs), 0);
  }
  seq.insert(seq.end(), static_cast<std::size_t>(sched.final_quant_epochs), 0);
  return seq;
}

}  // namespace quads
