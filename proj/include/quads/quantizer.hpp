#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "quads/model.hpp"
#include "quads/tensor.hpp"

namespace quads {

inline constexpr int kMaxCodebookBits = 16;

// Per-layer weight-sharing codebook: 2^b centroids and one index per weight
// in row-major order.
struct LayerCodebook {
  int bit_length = 1;
  std::vector<double> centroids;
  std::vector<std::uint32_t> indices;

  std::size_t k() const { return centroids.size(); }
  // Throws unless length(C) == 2^b and every index addresses a centroid.
  void validate() const;

  bool operator==(const LayerCodebook&) const = default;
};

struct KMeansTrace {
  std::vector<double> sse;  // after every Lloyd step of the winning restart
  std::size_t iterations = 0;
  bool converged = false;
  std::size_t winning_restart = 0;
};

// Nearest centroid, ties toward the lowest index.
std::size_t nearest_centroid(double w, std::span<const double> centroids);
std::vector<std::uint32_t> assign_nearest(std::span<const double> weights, std::span<const double> centroids);

double codebook_sse(std::span<const double> weights, const LayerCodebook& cb);

// 1-D Lloyd's algorithm with k = 2^b. Each restart draws k distinct values
// from the weights as initial centroids; the lowest-SSE restart wins. With
// fewer than k distinct weights the centroids are the sorted distinct values
// padded by repeating the largest one, and SSE is zero. Empty clusters are
// re-seeded to the weight farthest from its centroid.
LayerCodebook kmeans_fit(std::span<const double> weights, int bit_length, int max_iters, std::uint64_t seed,
                         int restarts, KMeansTrace* trace = nullptr);

// Lloyd's algorithm started from existing centroids.
LayerCodebook kmeans_refit(std::span<const double> weights, const LayerCodebook& warm, int max_iters,
                           KMeansTrace* trace = nullptr);

// W_hat[pos] = C[I[pos]].
ad::Tensor reconstruct(const LayerCodebook& cb, const ad::Shape& shape);

// dL/dC_k = sum over positions with I == k of dL/dW.
std::vector<double> centroid_gradient(std::span<const double> weight_grad, std::span<const std::uint32_t> indices,
                                      std::size_t k);

// C <- C - lr * grad_C with indices unchanged. Throws quads::NumericalError
// on a non-finite gradient.
LayerCodebook apply_codebook_step(const LayerCodebook& cb, std::span<const double> grad_c, double lr);

std::size_t distinct_values(std::span<const double> values);

// Which parameter tensors get a codebook. Weight matrices and conv kernels
// always do; biases stay full precision unless requested.
struct QuantPolicy {
  bool quantize_head = true;
  bool quantize_biases = false;

  bool selects(ParamKind kind) const;
};

struct KMeansSettings {
  int max_iters = 100;
  int restarts = 3;
};

// A student whose selected layers are represented by codebooks. `base` always
// holds the reconstructed values for quantized layers and the full-precision
// values for exempt ones.
struct QuantizedModel {
  ModelGraph base;
  int bit_length = 0;
  std::map<std::string, LayerCodebook> codebooks;

  bool is_quantized(const std::string& id) const { return codebooks.contains(id); }
  // Rewrites base from the codebooks.
  void sync_base();
  std::size_t codebook_entry_count() const;
};

QuantizedModel quantize_model(const ModelGraph& student, int bit_length, const QuantPolicy& policy,
                              std::uint64_t seed, const KMeansSettings& settings = {});

// Seed used for the codebook of parameter index i.
std::uint64_t layer_seed(std::uint64_t seed, std::size_t param_index);

// Rounds every value to the nearest fp32.
void round_to_float(std::span<double> values);

}  // namespace quads
