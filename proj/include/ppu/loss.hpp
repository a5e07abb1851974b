#pragma once

// Chamfer-type losses and point-set distances. Chamfer terms use squared
// nearest-neighbor distances; Hausdorff is unsquared.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "ppu/error.hpp"
#include "ppu/geom.hpp"
#include "ppu/point_set.hpp"
#include "ppu/tensor.hpp"

namespace ppu {

struct LossConfig {
  // delta = multiplier * (mean NN distance of the reference)^2
  double delta_multiplier = 5.0;

  void validate() const {
    if (!(delta_multiplier > 0.0)) {
      throw ValidationError("delta multiplier must be positive");
    }
  }
};

struct Nearest {
  std::vector<std::size_t> index;
  std::vector<double> sq_distance;
};

// For every row of `from`, its nearest row in `to` (lower index on ties).
template <RowMatrix A, RowMatrix B>
Nearest nearest(const A& from, const B& to) {
  Nearest out;
  out.index.resize(from.rows());
  out.sq_distance.resize(from.rows());
  for (std::size_t i = 0; i < from.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    auto p = from.row(i);
    for (std::size_t j = 0; j < to.rows(); ++j) {
      const double d = squared_distance(p, to.row(j));
      if (d < best) {
        best = d;
        arg = j;
      }
    }
    out.index[i] = arg;
    out.sq_distance[i] = best;
  }
  return out;
}

namespace detail {
template <RowMatrix A, RowMatrix B>
void check_pair(const A& p, const B& q, const char* what) {
  if (p.rows() == 0 || q.rows() == 0) {
    throw ValidationError(std::string(what) + ": empty point set");
  }
  if (p.cols() != q.cols()) {
    throw DimensionError(std::string(what) + ": dimension mismatch");
  }
}
}  // namespace detail

// Outlier threshold in squared-distance units.
inline double chamfer_delta(const PointSet& reference, const LossConfig& cfg) {
  cfg.validate();
  if (std::isinf(cfg.delta_multiplier)) return cfg.delta_multiplier;
  if (reference.size() < 2) return std::numeric_limits<double>::infinity();
  const double spacing = mean_nn_distance(reference);
  return cfg.delta_multiplier * spacing * spacing;
}

// Symmetric mean of squared NN distances with terms above `delta` dropped.
template <RowMatrix A>
double modified_chamfer_value(const A& p, const PointSet& q, double delta) {
  detail::check_pair(p, q, "modified_chamfer");
  const Nearest pq = nearest(p, q);
  const Nearest qp = nearest(q, p);
  double a = 0.0, b = 0.0;
  for (double d : pq.sq_distance) a += d <= delta ? d : 0.0;
  for (double d : qp.sq_distance) b += d <= delta ? d : 0.0;
  return a / static_cast<double>(p.rows()) + b / static_cast<double>(q.size());
}

inline double chamfer(const PointSet& p, const PointSet& q) {
  return modified_chamfer_value(p, q, std::numeric_limits<double>::infinity());
}

inline double modified_chamfer(const PointSet& p, const PointSet& q,
                               const LossConfig& cfg) {
  return modified_chamfer_value(p, q, chamfer_delta(q, cfg));
}

// Differentiable modified Chamfer loss; gradient flows into `prediction`
// through the surviving terms only.
inline Tensor modified_chamfer(Tape& tape, const Tensor& prediction,
                               const PointSet& reference, const LossConfig& cfg) {
  if (prediction.rank() != 2) {
    throw DimensionError("modified_chamfer: prediction must be [n x d]");
  }
  detail::check_pair(prediction, reference, "modified_chamfer");
  // The outlier filter would otherwise silently drop non-finite points.
  for (double v : prediction.data()) {
    if (!std::isfinite(v)) {
      return Tensor::scalar(std::numeric_limits<double>::quiet_NaN());
    }
  }
  const double delta = chamfer_delta(reference, cfg);
  Nearest pq = nearest(prediction, reference);
  Nearest qp = nearest(reference, prediction);
  const double np = static_cast<double>(prediction.rows());
  const double nq = static_cast<double>(reference.size());
  double a = 0.0, b = 0.0;
  for (double d : pq.sq_distance) a += d <= delta ? d : 0.0;
  for (double d : qp.sq_distance) b += d <= delta ? d : 0.0;
  Tensor out = Tensor::scalar(a / np + b / nq);
  if (tape.wants({&prediction})) {
    tape.record(out, [prediction, reference, out, pq = std::move(pq),
                      qp = std::move(qp), delta, np, nq]() mutable {
      const double g = out.grad()[0];
      auto gp = prediction.grad();
      auto pv = prediction.data();
      const std::size_t d = prediction.cols();
      for (std::size_t i = 0; i < pq.index.size(); ++i) {
        if (pq.sq_distance[i] > delta) continue;
        auto q = reference.row(pq.index[i]);
        for (std::size_t j = 0; j < d; ++j) {
          gp[i * d + j] += g * 2.0 * (pv[i * d + j] - q[j]) / np;
        }
      }
      for (std::size_t r = 0; r < qp.index.size(); ++r) {
        if (qp.sq_distance[r] > delta) continue;
        const std::size_t i = qp.index[r];
        auto q = reference.row(r);
        for (std::size_t j = 0; j < d; ++j) {
          gp[i * d + j] += g * 2.0 * (pv[i * d + j] - q[j]) / nq;
        }
      }
    });
  }
  return out;
}

inline double hausdorff(const PointSet& p, const PointSet& q) {
  detail::check_pair(p, q, "hausdorff");
  double worst = 0.0;
  for (double d : nearest(p, q).sq_distance) worst = std::max(worst, d);
  for (double d : nearest(q, p).sq_distance) worst = std::max(worst, d);
  return std::sqrt(worst);
}

}  // namespace ppu
