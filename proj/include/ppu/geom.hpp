#pragma once

// Geometry kernels: exact kNN, farthest point sampling, patch
// normalization, patch extraction for training and inference, and merging.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ppu/error.hpp"
#include "ppu/point_set.hpp"

namespace ppu {

// Anything with rows(), cols() and row(i) -> span<const double>: PointSet and
// 2-D feature tensors both qualify.
template <typename M>
concept RowMatrix = requires(const M& m, std::size_t i) {
  { m.rows() } -> std::convertible_to<std::size_t>;
  { m.cols() } -> std::convertible_to<std::size_t>;
  { m.row(i) } -> std::convertible_to<std::span<const double>>;
};

inline double squared_distance(std::span<const double> a,
                               std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

// Brute-force kNN. Row i lists the k nearest source rows to query row i by
// Euclidean distance, ties broken by lower source index.
template <RowMatrix Q, RowMatrix S>
NeighborIndex knn(const Q& query, const S& source, std::size_t k) {
  if (query.cols() != source.cols()) {
    throw DimensionError("knn: query has " + std::to_string(query.cols()) +
                         " columns, source has " +
                         std::to_string(source.cols()));
  }
  const std::size_t n = source.rows();
  if (k > n) {
    throw ValidationError("knn: k=" + std::to_string(k) + " exceeds " +
                          std::to_string(n) + " source rows");
  }
  NeighborIndex out{query.rows(), k, {}};
  out.indices.resize(query.rows() * k);
  std::vector<std::pair<double, std::size_t>> cand(n);
  for (std::size_t i = 0; i < query.rows(); ++i) {
    auto q = query.row(i);
    for (std::size_t s = 0; s < n; ++s) {
      cand[s] = {squared_distance(q, source.row(s)), s};
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(k),
                      cand.end());
    for (std::size_t j = 0; j < k; ++j) out.indices[i * k + j] = cand[j].second;
  }
  return out;
}

// kNN of a single query point.
template <RowMatrix S>
std::vector<std::size_t> knn_point(std::span<const double> q, const S& source,
                                   std::size_t k) {
  PointSet single(q.size(), std::vector<double>(q.begin(), q.end()));
  return knn(single, source, k).indices;
}

// Greedy max-min sampler; next() yields indices in farthest-point order.
// Ties are broken by lower index.
class FarthestPointSampler {
 public:
  FarthestPointSampler(const PointSet& points, std::size_t start)
      : points_(&points),
        min_d2_(points.size(), std::numeric_limits<double>::infinity()),
        next_(start) {
    if (start >= points.size()) {
      throw ValidationError("farthest_point_sample: start index out of range");
    }
  }

  std::size_t picked() const { return picked_; }

  std::size_t next() {
    if (picked_ >= points_->size()) {
      throw ValidationError("farthest_point_sample: all points already picked");
    }
    const std::size_t chosen = next_;
    ++picked_;
    auto c = points_->row(chosen);
    double best = -1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < points_->size(); ++i) {
      const double d = std::min(min_d2_[i], squared_distance(points_->row(i), c));
      min_d2_[i] = d;
      if (i == chosen) min_d2_[i] = -1.0;
      if (min_d2_[i] > best) {
        best = min_d2_[i];
        best_i = i;
      }
    }
    next_ = best_i;
    return chosen;
  }

 private:
  const PointSet* points_;
  std::vector<double> min_d2_;  // -1 marks selected points
  std::size_t next_;
  std::size_t picked_ = 0;
};

inline std::vector<std::size_t> farthest_point_sample(const PointSet& points,
                                                      std::size_t m,
                                                      std::size_t start = 0) {
  if (m == 0 || m > points.size()) {
    throw ValidationError("farthest_point_sample: m=" + std::to_string(m) +
                          " must lie in [1, " + std::to_string(points.size()) +
                          "]");
  }
  FarthestPointSampler fps(points, start);
  std::vector<std::size_t> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) out.push_back(fps.next());
  return out;
}

// Mean over points of the distance to the nearest other point.
template <RowMatrix M>
double mean_nn_distance(const M& points) {
  const std::size_t n = points.rows();
  if (n < 2) throw ValidationError("mean_nn_distance needs at least 2 points");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      best = std::min(best, squared_distance(points.row(i), points.row(j)));
    }
    total += std::sqrt(best);
  }
  return total / static_cast<double>(n);
}

// Maps global coordinates into a patch frame: (p - centroid) / scale.
struct PatchTransform {
  std::vector<double> centroid;
  double scale = 1.0;

  static PatchTransform identity(std::size_t dim) {
    return {std::vector<double>(dim, 0.0), 1.0};
  }

  PointSet apply(const PointSet& points) const {
    PointSet out = points;
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (std::size_t j = 0; j < out.dim(); ++j) {
        out(i, j) = (out(i, j) - centroid[j]) / scale;
      }
    }
    return out;
  }

  // Offset such that x_local = x_global / scale + offset().
  std::vector<double> offset() const {
    std::vector<double> o(centroid.size());
    for (std::size_t j = 0; j < o.size(); ++j) o[j] = -centroid[j] / scale;
    return o;
  }
};

inline PointSet denormalize(const PointSet& points, const PatchTransform& t) {
  PointSet out = points;
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < out.dim(); ++j) {
      out(i, j) = out(i, j) * t.scale + t.centroid[j];
    }
  }
  return out;
}

// Centroid subtraction, then division by the largest axis extent (1 when all
// points coincide).
inline std::pair<PointSet, PatchTransform> normalize_patch(
    const PointSet& points) {
  if (points.empty()) throw ValidationError("normalize_patch: empty patch");
  if (!points.all_finite()) {
    throw NumericError("normalize_patch: non-finite coordinates");
  }
  const std::size_t d = points.dim(), n = points.size();
  PatchTransform t{std::vector<double>(d, 0.0), 1.0};
  double extent = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    double lo = points(0, j), hi = points(0, j), s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      lo = std::min(lo, points(i, j));
      hi = std::max(hi, points(i, j));
      s += points(i, j);
    }
    t.centroid[j] = s / static_cast<double>(n);
    extent = std::max(extent, hi - lo);
  }
  t.scale = extent > 0.0 ? extent : 1.0;
  return {t.apply(points), t};
}

// Normalized input/reference patches built around one query point.
struct PatchPair {
  PointSet input_patch;
  PointSet reference_patch;
  PatchTransform transform;
  std::size_t level = 0;
  std::vector<double> query_point;  // global frame
  std::size_t query_index = 0;      // into the previous prediction
  std::vector<std::size_t> input_indices;
  std::vector<std::size_t> reference_indices;
};

inline std::size_t reference_patch_size(std::size_t patch_size,
                                        std::size_t target_level,
                                        std::size_t level) {
  return (std::size_t{1} << (target_level - level + 1)) * patch_size;
}

// Training-time extraction at `level` for target `target_level`: N spatial
// neighbors of a random query in the previous prediction, and
// 2^(target-level+1) N neighbors of the same query in the previous reference.
template <typename Rng>
PatchPair extract_training_patches(const PointSet& prev_prediction,
                                   const PointSet& prev_reference,
                                   std::size_t patch_size,
                                   std::size_t target_level, std::size_t level,
                                   Rng& rng) {
  if (level < 1 || level > target_level) {
    throw ValidationError("extract_training_patches: level must lie in [1, " +
                          std::to_string(target_level) + "]");
  }
  const std::size_t ref_size =
      reference_patch_size(patch_size, target_level, level);
  if (prev_prediction.size() < patch_size) {
    throw ValidationError("extract_training_patches: prediction has " +
                          std::to_string(prev_prediction.size()) +
                          " points, patch needs " + std::to_string(patch_size));
  }
  if (prev_reference.size() < ref_size) {
    throw ValidationError("extract_training_patches: reference has " +
                          std::to_string(prev_reference.size()) +
                          " points, patch needs " + std::to_string(ref_size));
  }
  std::uniform_int_distribution<std::size_t> pick(0, prev_prediction.size() - 1);
  PatchPair pair;
  pair.level = level;
  pair.query_index = pick(rng);
  auto q = prev_prediction.row(pair.query_index);
  pair.query_point.assign(q.begin(), q.end());
  pair.input_indices = knn_point(q, prev_prediction, patch_size);
  pair.reference_indices = knn_point(q, prev_reference, ref_size);
  auto [input, transform] =
      normalize_patch(prev_prediction.select(pair.input_indices));
  pair.input_patch = std::move(input);
  pair.transform = transform;
  pair.reference_patch =
      transform.apply(prev_reference.select(pair.reference_indices));
  return pair;
}

struct InferencePatch {
  PointSet points;  // normalized
  PatchTransform transform;
  std::size_t query_index = 0;
  std::vector<std::size_t> indices;
};

// Overlapping patches whose seeds come from farthest point sampling starting
// at index 0. Starts from ceil(coverage * n / N) seeds and adds seeds until
// every input point belongs to at least one patch.
inline std::vector<InferencePatch> extract_inference_patches(
    const PointSet& points, std::size_t patch_size, double coverage_factor) {
  const std::size_t n = points.size();
  if (patch_size == 0 || n < patch_size) {
    throw ValidationError("extract_inference_patches: " + std::to_string(n) +
                          " points cannot fill a patch of " +
                          std::to_string(patch_size));
  }
  if (!(coverage_factor > 0.0)) {
    throw ValidationError("extract_inference_patches: coverage must be > 0");
  }
  std::size_t target = static_cast<std::size_t>(std::ceil(
      coverage_factor * static_cast<double>(n) / static_cast<double>(patch_size)));
  target = std::clamp<std::size_t>(target, 1, n);

  FarthestPointSampler fps(points, 0);
  std::vector<InferencePatch> patches;
  std::vector<bool> covered(n, false);
  std::size_t covered_count = 0;
  while (fps.picked() < n &&
         (patches.size() < target || covered_count < n)) {
    InferencePatch patch;
    patch.query_index = fps.next();
    patch.indices = knn_point(points.row(patch.query_index), points, patch_size);
    for (std::size_t i : patch.indices) {
      if (!covered[i]) {
        covered[i] = true;
        ++covered_count;
      }
    }
    auto [local, transform] = normalize_patch(points.select(patch.indices));
    patch.points = std::move(local);
    patch.transform = std::move(transform);
    patches.push_back(std::move(patch));
  }
  return patches;
}

// Concatenates partial outputs and keeps target_count of them by farthest
// point sampling from index 0. Selected points keep their concatenation order.
inline PointSet merge_and_resample(const std::vector<PointSet>& partials,
                                   std::size_t target_count) {
  if (partials.empty()) throw ValidationError("merge_and_resample: no partials");
  PointSet merged(partials.front().dim(), {});
  for (const PointSet& p : partials) {
    if (p.dim() != merged.dim()) {
      throw DimensionError("merge_and_resample: dimension mismatch");
    }
    for (std::size_t i = 0; i < p.size(); ++i) merged.push_back(p.row(i));
  }
  if (target_count == 0 || merged.size() < target_count) {
    throw ValidationError("merge_and_resample: " +
                          std::to_string(merged.size()) +
                          " points cannot yield " + std::to_string(target_count));
  }
  auto picked = farthest_point_sample(merged, target_count, 0);
  std::sort(picked.begin(), picked.end());
  return merged.select(picked);
}

}  // namespace ppu
