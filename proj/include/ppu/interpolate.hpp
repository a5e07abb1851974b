#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "ppu/error.hpp"
#include "ppu/geom.hpp"
#include "ppu/ops.hpp"
#include "ppu/point_set.hpp"
#include "ppu/tensor.hpp"

namespace ppu {

// Kernel widths of the bilateral weights: r for positions, h for features.
struct BilateralWidths {
  double spatial = 1.0;
  double feature = 1.0;
};

// Mean closest-neighbor distance of the sources in each space; zero widths
// (coincident sources) and single-source sets fall back to 1.
inline BilateralWidths bilateral_widths(const PointSet& src_pts,
                                        const Tensor& src_feats) {
  BilateralWidths w;
  if (src_pts.size() >= 2) {
    w.spatial = mean_nn_distance(src_pts);
    w.feature = mean_nn_distance(src_feats);
  }
  if (!(w.spatial > 0.0)) w.spatial = 1.0;
  if (!(w.feature > 0.0)) w.feature = 1.0;
  return w;
}

// Interpolates source features onto query points:
//
//   out_i = sum_j theta_ij psi_ij g_j / sum_j theta_ij psi_ij
//   theta_ij = exp(-(|p_i - s_j| / r)^2),  psi_ij = exp(-(|f_i - g_j| / h)^2)
//
// over the k spatial neighbors s_j of p_i. Weights are normalized in the log
// domain so they stay finite when all raw weights underflow. Differentiable
// in query_feats (f) and src_feats (g); positions and widths are constants.
inline Tensor bilateral_interpolate(Tape& tape, const PointSet& query_pts,
                                    const Tensor& query_feats,
                                    const PointSet& src_pts,
                                    const Tensor& src_feats, std::size_t k,
                                    std::optional<BilateralWidths> widths = {}) {
  if (src_pts.empty()) throw ValidationError("bilateral_interpolate: no sources");
  if (query_feats.rank() != 2 || src_feats.rank() != 2 ||
      query_feats.cols() != src_feats.cols()) {
    throw DimensionError("bilateral_interpolate: feature widths differ");
  }
  if (query_feats.rows() != query_pts.size() ||
      src_feats.rows() != src_pts.size()) {
    throw DimensionError("bilateral_interpolate: feature rows do not match points");
  }
  if (k == 0 || k > src_pts.size()) {
    throw ValidationError("bilateral_interpolate: k out of range");
  }
  const BilateralWidths w = widths ? *widths : bilateral_widths(src_pts, src_feats);
  const double inv_r2 = 1.0 / (w.spatial * w.spatial);
  const double inv_h2 = 1.0 / (w.feature * w.feature);

  const NeighborIndex nbr = knn(query_pts, src_pts, k);
  const std::size_t n = query_pts.size(), c = query_feats.cols();
  std::vector<double> weights(n * k);
  Tensor out = Tensor::zeros({n, c});
  auto o = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    double* wi = weights.data() + i * k;
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t s = nbr(i, j);
      wi[j] = -squared_distance(query_pts.row(i), src_pts.row(s)) * inv_r2 -
              squared_distance(query_feats.row(i), src_feats.row(s)) * inv_h2;
      top = std::max(top, wi[j]);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      wi[j] = std::exp(wi[j] - top);
      total += wi[j];
    }
    for (std::size_t j = 0; j < k; ++j) {
      wi[j] /= total;
      auto g = src_feats.row(nbr(i, j));
      for (std::size_t ch = 0; ch < c; ++ch) o[i * c + ch] += wi[j] * g[ch];
    }
  }

  if (tape.wants({&query_feats, &src_feats})) {
    tape.record(out, [query_feats, src_feats, out, nbr, weights = std::move(weights),
                      inv_h2, n, k, c]() mutable {
      auto gout = out.grad();
      auto ov = out.data();
      auto fv = query_feats.data();
      auto gv = src_feats.data();
      const bool want_f = query_feats.requires_grad();
      const bool want_g = src_feats.requires_grad();
      std::span<double> gf = want_f ? query_feats.grad() : std::span<double>{};
      std::span<double> gg = want_g ? src_feats.grad() : std::span<double>{};
      for (std::size_t i = 0; i < n; ++i) {
        const double* G = gout.data() + i * c;
        const double* oi = ov.data() + i * c;
        const double* fi = fv.data() + i * c;
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t s = nbr(i, j);
          const double wij = weights[i * k + j];
          const double* gj = gv.data() + s * c;
          // d loss / d logit_ij
          double dlogit = 0.0;
          for (std::size_t ch = 0; ch < c; ++ch) dlogit += G[ch] * (gj[ch] - oi[ch]);
          dlogit *= wij;
          // logit_ij = ... - |f_i - g_j|^2 / h^2
          const double coef = 2.0 * inv_h2 * dlogit;
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double diff = fi[ch] - gj[ch];
            if (want_f) gf[i * c + ch] -= coef * diff;
            if (want_g) gg[s * c + ch] += coef * diff + wij * G[ch];
          }
        }
      }
    });
  }
  return out;
}

}  // namespace ppu
