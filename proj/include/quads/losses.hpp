#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "quads/tensor.hpp"

namespace quads {

enum class Reduction { sum, mean };

// sum_i ||z_teacher_i - z_student_i||_1 over a (batch x n) pair, divided by
// the batch size for Reduction::mean. The teacher side is detached.
ad::Tensor l1_feature_loss(ad::Tape& tape, const ad::Tensor& z_teacher, const ad::Tensor& z_student,
                           Reduction reduction = Reduction::mean);

// -log softmax(logits)[label], reduced over the batch. Labels must lie in
// [0, n_classes).
ad::Tensor cross_entropy(ad::Tape& tape, const ad::Tensor& logits, std::span<const std::size_t> labels,
                         Reduction reduction = Reduction::mean);

// alpha * l1 + (1 - alpha) * l_gt, alpha in [0, 1].
ad::Tensor distillation_loss(ad::Tape& tape, const ad::Tensor& l1, const ad::Tensor& l_gt, double alpha);
double distillation_loss(double l1, double l_gt, double alpha);

// l_centroid + l_gt.
ad::Tensor quantization_loss(ad::Tape& tape, const ad::Tensor& l_centroid, const ad::Tensor& l_gt);
double quantization_loss(double l_centroid, double l_gt);

// gamma * l_dis + (1 - gamma) * l_quant with gamma restricted to {0, 1}; the
// unselected branch is returned untouched or, in the lazy form, never built.
ad::Tensor combined_loss(const ad::Tensor& l_dis, const ad::Tensor& l_quant, double gamma);
ad::Tensor combined_loss(const std::function<ad::Tensor()>& l_dis, const std::function<ad::Tensor()>& l_quant,
                         double gamma);
double combined_loss(double l_dis, double l_quant, double gamma);

struct LossBreakdown {
  double l1 = 0.0;
  double l_gt = 0.0;
  double l_dis = 0.0;
  double l_centroid = 0.0;
  double l_quant = 0.0;
  double total = 0.0;
  double alpha = 0.0;
  int gamma = 1;

  // Fills the derived terms from the measured ones so that the identities
  // l_dis = a*l1 + (1-a)*l_gt, l_quant = l_centroid + l_gt and
  // total = g*l_dis + (1-g)*l_quant hold exactly.
  static LossBreakdown from_terms(double l1, double l_gt, double l_centroid, double alpha, int gamma);

  bool consistent() const;
};

}  // namespace quads
