#include "quads/losses.hpp"

#include <cmath>
#include <string>

#include "quads/error.hpp"
#include "quads/ops.hpp"

namespace quads {
namespace {

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("distillation_loss: alpha must lie in [0, 1], got " + std::to_string(alpha));
}

void check_gamma(double gamma) {
  if (gamma != 0.0 && gamma != 1.0) throw Error("combined_loss: gamma must be 0 or 1, got " + std::to_string(gamma));
}

}  // namespace

ad::Tensor l1_feature_loss(ad::Tape& tape, const ad::Tensor& z_teacher, const ad::Tensor& z_student,
                           Reduction reduction) {
  if (z_teacher.shape() != z_student.shape() || z_student.rank() != 2)
    throw Error("l1_feature_loss: teacher features " + ad::shape_string(z_teacher.shape()) +
                " and student features " + ad::shape_string(z_student.shape()) + " must both be (batch x n)");
  const ad::Tensor diff = ad::sub(tape, z_teacher.detach(), z_student);
  const ad::Tensor total = ad::sum(tape, ad::abs(tape, diff));
  if (reduction == Reduction::sum) return total;
  return ad::mul_scalar(tape, total, 1.0 / static_cast<double>(z_student.dim(0)));
}

ad::Tensor cross_entropy(ad::Tape& tape, const ad::Tensor& logits, std::span<const std::size_t> labels,
                         Reduction reduction) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size() || labels.empty())
    throw Error("cross_entropy: logits " + ad::shape_string(logits.shape()) + " do not match " +
                std::to_string(labels.size()) + " labels");
  for (std::size_t y : labels)
    if (y >= logits.dim(1))
      throw Error("cross_entropy: label " + std::to_string(y) + " outside [0, " + std::to_string(logits.dim(1)) + ")");
  const ad::Tensor picked = ad::pick(tape, ad::log_softmax(tape, logits), labels);
  const double scale = reduction == Reduction::mean ? -1.0 / static_cast<double>(labels.size()) : -1.0;
  return ad::mul_scalar(tape, ad::sum(tape, picked), scale);
}

ad::Tensor distillation_loss(ad::Tape& tape, const ad::Tensor& l1, const ad::Tensor& l_gt, double alpha) {
  check_alpha(alpha);
  if (alpha == 1.0) return l1;
  if (alpha == 0.0) {
    // l1 stays on the tape with zero weight so its branch is still evaluated.
    return ad::add(tape, ad::mul_scalar(tape, l1, 0.0), l_gt);
  }
  return ad::add(tape, ad::mul_scalar(tape, l1, alpha), ad::mul_scalar(tape, l_gt, 1.0 - alpha));
}

double distillation_loss(double l1, double l_gt, double alpha) {
  check_alpha(alpha);
  return alpha * l1 + (1.0 - alpha) * l_gt;
}

ad::Tensor quantization_loss(ad::Tape& tape, const ad::Tensor& l_centroid, const ad::Tensor& l_gt) {
  if (!std::isfinite(l_centroid.item()) || !std::isfinite(l_gt.item()))
    throw NumericalError("quantization_loss: non-finite input");
  return ad::add(tape, l_centroid, l_gt);
}

double quantization_loss(double l_centroid, double l_gt) {
  if (!std::isfinite(l_centroid) || !std::isfinite(l_gt)) throw NumericalError("quantization_loss: non-finite input");
  return l_centroid + l_gt;
}

ad::Tensor combined_loss(const ad::Tensor& l_dis, const ad::Tensor& l_quant, double gamma) {
  check_gamma(gamma);
  return gamma == 1.0 ? l_dis : l_quant;
}

ad::Tensor combined_loss(const std::function<ad::Tensor()>& l_dis, const std::function<ad::Tensor()>& l_quant,
                         double gamma) {
  check_gamma(gamma);
  return gamma == 1.0 ? l_dis() : l_quant();
}

double combined_loss(double l_dis, double l_quant, double gamma) {
  check_gamma(gamma);
  return gamma == 1.0 ? l_dis : l_quant;
}

LossBreakdown LossBreakdown::from_terms(double l1, double l_gt, double l_centroid, double alpha, int gamma) {
  LossBreakdown b;
  b.l1 = l1;
  b.l_gt = l_gt;
  b.l_centroid = l_centroid;
  b.alpha = alpha;
  b.gamma = gamma;
  b.l_dis = distillation_loss(l1, l_gt, alpha);
  b.l_quant = quantization_loss(l_centroid, l_gt);
  b.total = combined_loss(b.l_dis, b.l_quant, gamma);
  return b;
}

bool LossBreakdown::consistent() const {
  return (gamma == 0 || gamma == 1) && l_dis == alpha * l1 + (1.0 - alpha) * l_gt &&
         l_quant == l_centroid + l_gt && total == (gamma == 1 ? l_dis : l_quant);
}

}  // namespace quads
