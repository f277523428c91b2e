#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "quads/corpus.hpp"
#include "quads/losses.hpp"
#include "quads/model.hpp"
#include "quads/quantizer.hpp"

namespace quads {

enum class OptimizerKind { sgd, adam };
enum class Phase { distill, quantize, final_quantize };

std::string_view phase_name(Phase phase);
std::string_view optimizer_name(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct MctSchedule {
  int cycles = 5;
  int distill_epochs = 5;
  int quant_epochs = 5;
  int final_quant_epochs = 5;
  double alpha = 0.5;
  int bit_length = 4;
  double lr_encoder = 1e-6;
  double lr_classifier = 1e-3;
  double lr_codebook = 1e-3;
  OptimizerKind optimizer = OptimizerKind::adam;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  // Re-run Lloyd (warm-started) on entry to every quantization phase;
  // otherwise the first codebooks are kept.
  bool refit_codebooks = true;
  // Backpropagate l_centroid + l_gt (the task loss twice) instead of once.
  bool double_count_task_loss = false;
  QuantPolicy policy;
  KMeansSettings kmeans;

  void validate() const;
};

struct TrainData {
  std::vector<io::Example> train;
  std::vector<io::Example> val;
  std::size_t n_classes = 0;
};

struct EpochRecord {
  int cycle = 0;
  Phase phase = Phase::distill;
  int epoch = 0;
  LossBreakdown losses;
  double accuracy = 0.0;
  double f1 = 0.0;
};

struct TrainState {
  ModelGraph student;
  std::optional<QuantizedModel> quantized;
  Phase phase = Phase::distill;
  int cycle_index = 0;
  std::vector<EpochRecord> history;

  // The model the current phase evaluates: the full-precision student while
  // distilling, the codebook reconstruction while quantizing.
  ModelGraph effective_model() const;
};

struct StepInfo {
  Phase phase;
  int cycle;
  int epoch;
  std::size_t batch;
};

struct TrainHooks {
  std::ostream* progress = nullptr;
  std::function<void(const TrainState&, const StepInfo&)> on_step;
};

// Plain SGD or Adam (beta1 0.9, beta2 0.999, eps 1e-8) keyed by tensor name.
class Optimizer {
 public:
  explicit Optimizer(OptimizerKind kind) : kind_(kind) {}

  // Update direction for a gradient; values move by -lr * direction.
  std::vector<double> direction(const std::string& key, std::span<const double> grad);

 private:
  struct Moments {
    std::vector<double> m, v;
    long steps = 0;
  };
  OptimizerKind kind_;
  std::map<std::string, Moments> moments_;
};

// Frozen-teacher features for every example, computed once.
std::vector<ad::Tensor> teacher_features(const ModelGraph& teacher, std::span<const io::Example> examples);

struct EvalResult {
  double accuracy = 0.0;
  double f1 = 0.0;
  std::vector<std::size_t> predictions;
};
EvalResult evaluate(const ModelGraph& model, std::span<const io::Example> examples, std::size_t n_classes);

TrainState run_distill_phase(TrainState state, std::span<const ad::Tensor> teacher_z, const TrainData& data,
                             const MctSchedule& sched, const TrainHooks& hooks = {}, int epochs = -1);
TrainState run_distill_phase(TrainState state, const ModelGraph& teacher, const TrainData& data,
                             const MctSchedule& sched, const TrainHooks& hooks = {});

// Fits (or refits) codebooks on entry, trains centroids and exempt tensors
// with frozen assignments, then writes the reconstruction back into the
// student.
TrainState run_quant_phase(TrainState state, const TrainData& data, const MctSchedule& sched,
                           const TrainHooks& hooks = {}, bool final_phase = false);

struct TrainResult {
  QuantizedModel model;
  std::vector<EpochRecord> history;
};

// cycles x (distill -> quantize), then the final quantization phase.
TrainResult mct_train(const ModelGraph& teacher, const EncoderConfig& student_cfg, const InitMode& init,
                      const TrainData& data, const MctSchedule& sched, const TrainHooks& hooks = {});

// cycles * distill_epochs of distillation, then one k-means fit with no
// codebook training.
TrainResult baseline_quantize_after_distill(const ModelGraph& teacher, const EncoderConfig& student_cfg,
                                            const InitMode& init, const TrainData& data, const MctSchedule& sched,
                                            const TrainHooks& hooks = {});

struct DistillResult {
  ModelGraph student;
  std::vector<EpochRecord> history;
};

// cycles * distill_epochs of distillation; full-precision result.
DistillResult distill_only(const ModelGraph& teacher, const EncoderConfig& student_cfg, const InitMode& init,
                           const TrainData& data, const MctSchedule& sched, const TrainHooks& hooks = {});

// Cross-entropy training used for the teacher and for student pretraining.
struct SupervisedOptions {
  int max_epochs = 40;
  int patience = 5;
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  OptimizerKind optimizer = OptimizerKind::adam;
};

struct SupervisedResult {
  ModelGraph model;
  std::vector<EpochRecord> history;
  double best_val_accuracy = 0.0;
  int best_epoch = 0;
};

SupervisedResult train_supervised(const ModelGraph& init, const TrainData& data, const SupervisedOptions& opts,
                                  const TrainHooks& hooks = {});

// Gamma for every epoch the schedule will record, in order.
std::vector<int> expected_gamma_sequence(const MctSchedule& sched);

}  // namespace quads
