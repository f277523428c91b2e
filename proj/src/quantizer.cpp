#include "quads/quantizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "quads/error.hpp"
#include "quads/rng.hpp"

namespace quads {

void LayerCodebook::validate() const {
  if (bit_length < 1 || bit_length > kMaxCodebookBits)
    throw Error("codebook: bit length " + std::to_string(bit_length) + " outside [1, 16]");
  if (centroids.size() != (std::size_t{1} << bit_length))
    throw Error("codebook: " + std::to_string(centroids.size()) + " centroids for bit length " +
                std::to_string(bit_length));
  for (std::uint32_t i : indices)
    if (i >= centroids.size()) throw Error("codebook: index " + std::to_string(i) + " addresses no centroid");
}

std::size_t nearest_centroid(double w, std::span<const double> centroids) {
  std::size_t best = 0;
  double best_d = std::fabs(w - centroids[0]);
  for (std::size_t j = 1; j < centroids.size(); ++j) {
    const double d = std::fabs(w - centroids[j]);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

namespace {

// Sorted view of the centroids with duplicate values reduced to their lowest
// index, for O(log k) nearest lookups with the same tie rule as
// nearest_centroid.
class CentroidIndex {
 public:
  explicit CentroidIndex(std::span<const double> centroids) {
    std::vector<std::uint32_t> order(centroids.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return centroids[a] < centroids[b]; });
    for (std::uint32_t j : order) {
      if (!values_.empty() && values_.back() == centroids[j]) continue;
      values_.push_back(centroids[j]);
      ids_.push_back(j);
    }
  }

  std::uint32_t nearest(double w) const {
    const auto it = std::lower_bound(values_.begin(), values_.end(), w);
    if (it == values_.begin()) return ids_.front();
    if (it == values_.end()) return ids_.back();
    const std::size_t hi = static_cast<std::size_t>(it - values_.begin());
    const std::size_t lo = hi - 1;
    const double dl = std::fabs(w - values_[lo]);
    const double dh = std::fabs(values_[hi] - w);
    if (dl < dh) return ids_[lo];
    if (dh < dl) return ids_[hi];
    return std::min(ids_[lo], ids_[hi]);
  }

 private:
  std::vector<double> values_;
  std::vector<std::uint32_t> ids_;
};

void check_weights(std::span<const double> weights) {
  if (weights.empty()) throw Error("kmeans_fit: no weights to cluster");
  for (double w : weights)
    if (!std::isfinite(w)) throw NumericalError("kmeans_fit: non-finite weight");
}

void check_bits(int bit_length) {
  if (bit_length < 1 || bit_length > kMaxCodebookBits)
    throw Error("kmeans_fit: bit length " + std::to_string(bit_length) + " outside [1, 16]");
}

std::vector<double> sorted_distinct(std::span<const double> weights) {
  std::vector<double> v(weights.begin(), weights.end());
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

double sse_of(std::span<const double> weights, std::span<const double> c, std::span<const std::uint32_t> idx) {
  double total = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double d = weights[i] - c[idx[i]];
    total += d * d;
  }
  return total;
}

// Moves each empty centroid onto the weight farthest from its current
// centroid. Returns true when anything moved.
bool reseed_empty(std::span<const double> weights, std::vector<double>& c, std::vector<std::uint32_t>& idx) {
  std::vector<std::size_t> counts(c.size(), 0);
  for (std::uint32_t j : idx) ++counts[j];
  bool moved = false;
  for (std::size_t j = 0; j < c.size(); ++j) {
    if (counts[j] > 0) continue;
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      const double d = std::fabs(weights[i] - c[idx[i]]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    // Every weight already sits on a centroid: the cluster stays collapsed.
    if (far_d <= 0.0) continue;
    --counts[idx[far]];
    c[j] = weights[far];
    idx[far] = static_cast<std::uint32_t>(j);
    ++counts[j];
    moved = true;
  }
  return moved;
}

struct LloydResult {
  std::vector<double> centroids;
  std::vector<std::uint32_t> indices;
  std::vector<double> sse;
  std::size_t iterations = 0;
  bool converged = false;
};

LloydResult lloyd(std::span<const double> weights, std::vector<double> c, int max_iters) {
  LloydResult r;
  std::vector<std::uint32_t> idx(weights.size());
  {
    const CentroidIndex index(c);
    for (std::size_t i = 0; i < weights.size(); ++i) idx[i] = index.nearest(weights[i]);
  }
  reseed_empty(weights, c, idx);
  r.sse.push_back(sse_of(weights, c, idx));

  std::vector<double> sums(c.size());
  std::vector<std::size_t> counts(c.size());
  std::vector<std::uint32_t> next(weights.size());
  for (int it = 0; it < max_iters; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < weights.size(); ++i) {
      sums[idx[i]] += weights[i];
      ++counts[idx[i]];
    }
    for (std::size_t j = 0; j < c.size(); ++j)
      if (counts[j] > 0) c[j] = sums[j] / static_cast<double>(counts[j]);

    const CentroidIndex index(c);
    for (std::size_t i = 0; i < weights.size(); ++i) next[i] = index.nearest(weights[i]);
    const bool moved = reseed_empty(weights, c, next);
    r.sse.push_back(sse_of(weights, c, next));
    ++r.iterations;
    const bool same = next == idx;
    idx.swap(next);
    if (same && !moved) {
      r.converged = true;
      break;
    }
  }
  r.centroids = std::move(c);
  r.indices = std::move(idx);
  return r;
}

}  // namespace

std::vector<std::uint32_t> assign_nearest(std::span<const double> weights, std::span<const double> centroids) {
  if (centroids.empty()) throw Error("assign_nearest: no centroids");
  const CentroidIndex index(centroids);
  std::vector<std::uint32_t> out(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) out[i] = index.nearest(weights[i]);
  return out;
}

double codebook_sse(std::span<const double> weights, const LayerCodebook& cb) {
  if (weights.size() != cb.indices.size()) throw Error("codebook_sse: weight and index counts differ");
  return sse_of(weights, cb.centroids, cb.indices);
}

LayerCodebook kmeans_fit(std::span<const double> weights, int bit_length, int max_iters, std::uint64_t seed,
                         int restarts, KMeansTrace* trace) {
  check_bits(bit_length);
  check_weights(weights);
  const std::size_t k = std::size_t{1} << bit_length;
  const auto distinct = sorted_distinct(weights);

  LayerCodebook cb;
  cb.bit_length = bit_length;
  if (distinct.size() <= k) {
    cb.centroids = distinct;
    cb.centroids.resize(k, distinct.back());
    cb.indices = assign_nearest(weights, cb.centroids);
    if (trace) *trace = KMeansTrace{{0.0}, 0, true, 0};
    return cb;
  }

  double best_sse = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(restarts, 1); ++r) {
    CounterRng rng(seed, static_cast<std::uint64_t>(r));
    // Partial Fisher-Yates over the distinct values.
    std::vector<double> pool = distinct;
    std::vector<double> init(k);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.below(pool.size() - j));
      std::swap(pool[j], pool[pick]);
      init[j] = pool[j];
    }
    LloydResult res = lloyd(weights, std::move(init), max_iters);
    if (res.sse.back() < best_sse) {
      best_sse = res.sse.back();
      cb.centroids = std::move(res.centroids);
      cb.indices = std::move(res.indices);
      if (trace) *trace = KMeansTrace{std::move(res.sse), res.iterations, res.converged, static_cast<std::size_t>(r)};
    }
  }
  return cb;
}

LayerCodebook kmeans_refit(std::span<const double> weights, const LayerCodebook& warm, int max_iters,
                           KMeansTrace* trace) {
  check_bits(warm.bit_length);
  check_weights(weights);
  if (warm.centroids.size() != (std::size_t{1} << warm.bit_length))
    throw Error("kmeans_refit: warm codebook has the wrong number of centroids");
  LloydResult res = lloyd(weights, warm.centroids, max_iters);
  if (trace) *trace = KMeansTrace{res.sse, res.iterations, res.converged, 0};
  return LayerCodebook{warm.bit_length, std::move(res.centroids), std::move(res.indices)};
}

ad::Tensor reconstruct(const LayerCodebook& cb, const ad::Shape& shape) {
  if (ad::shape_numel(shape) != cb.indices.size())
    throw Error("reconstruct: shape " + ad::shape_string(shape) + " does not hold " +
                std::to_string(cb.indices.size()) + " indices");
  std::vector<double> values(cb.indices.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (cb.indices[i] >= cb.centroids.size()) throw Error("reconstruct: index out of range");
    values[i] = cb.centroids[cb.indices[i]];
  }
  return ad::Tensor(shape, std::move(values), false);
}

std::vector<double> centroid_gradient(std::span<const double> weight_grad, std::span<const std::uint32_t> indices,
                                      std::size_t k) {
  if (weight_grad.size() != indices.size())
    throw Error("centroid_gradient: " + std::to_string(weight_grad.size()) + " gradients for " +
                std::to_string(indices.size()) + " indices");
  std::vector<double> grad(k, 0.0);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= k)
      throw Error("centroid_gradient: index " + std::to_string(indices[i]) + " >= k=" + std::to_string(k));
    grad[indices[i]] += weight_grad[i];
  }
  return grad;
}

LayerCodebook apply_codebook_step(const LayerCodebook& cb, std::span<const double> grad_c, double lr) {
  if (grad_c.size() != cb.centroids.size())
    throw Error("apply_codebook_step: gradient length " + std::to_string(grad_c.size()) + " != " +
                std::to_string(cb.centroids.size()) + " centroids");
  for (std::size_t j = 0; j < grad_c.size(); ++j)
    if (!std::isfinite(grad_c[j]))
      throw NumericalError("apply_codebook_step: non-finite gradient for centroid " + std::to_string(j));
  LayerCodebook out = cb;
  for (std::size_t j = 0; j < grad_c.size(); ++j) out.centroids[j] -= lr * grad_c[j];
  return out;
}

std::size_t distinct_values(std::span<const double> values) { return sorted_distinct(values).size(); }

bool QuantPolicy::selects(ParamKind kind) const {
  if (kind == ParamKind::head_weight) return quantize_head;
  if (is_weight(kind)) return true;
  if (kind == ParamKind::head_bias) return quantize_biases && quantize_head;
  return quantize_biases;
}

void QuantizedModel::sync_base() {
  const auto params = base.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto it = codebooks.find(params[i].id);
    if (it == codebooks.end()) continue;
    const ad::Tensor w = reconstruct(it->second, params[i].value.shape());
    base.set_values(i, {w.data().begin(), w.data().end()});
  }
}

std::size_t QuantizedModel::codebook_entry_count() const {
  std::size_t n = 0;
  for (const auto& [id, cb] : codebooks) n += cb.centroids.size();
  return n;
}

std::uint64_t layer_seed(std::uint64_t seed, std::size_t param_index) {
  CounterRng rng(seed, 0x51ed270b00000000ULL + param_index);
  return rng.next_u64();
}

void round_to_float(std::span<double> values) {
  for (double& v : values) v = static_cast<float>(v);
}

QuantizedModel quantize_model(const ModelGraph& student, int bit_length, const QuantPolicy& policy,
                              std::uint64_t seed, const KMeansSettings& settings) {
  if (student.role() != Role::student) throw Error("quantize_model: expects a student model");
  QuantizedModel q;
  q.base = student;
  q.bit_length = bit_length;
  const auto params = student.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!policy.selects(params[i].kind)) continue;
    LayerCodebook cb = kmeans_fit(params[i].value.data(), bit_length, settings.max_iters, layer_seed(seed, i),
                                  settings.restarts);
    round_to_float(cb.centroids);
    q.codebooks.emplace(params[i].id, std::move(cb));
  }
  q.sync_base();
  return q;
}

}  // namespace quads
