#pragma once

// Independent brute-force reference implementations used by the tests. They
// share no code with the library beyond the PointSet container.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "ppu/point_set.hpp"
#include "ppu/tensor.hpp"

namespace oracle {

inline ppu::PointSet random_points(std::size_t n, std::size_t d, std::mt19937_64& rng,
                                   double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> c(n * d);
  for (double& v : c) v = u(rng);
  return ppu::PointSet(d, std::move(c));
}

inline ppu::Tensor random_tensor(ppu::Shape shape, std::mt19937_64& rng,
                                 bool requires_grad = true, double lo = -1.0,
                                 double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(ppu::shape_numel(shape));
  for (double& x : v) x = u(rng);
  return ppu::Tensor::from(std::move(shape), std::move(v), requires_grad);
}

inline double dist2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

inline std::vector<double> row(const ppu::PointSet& p, std::size_t i) {
  std::vector<double> r(p.dim());
  for (std::size_t j = 0; j < p.dim(); ++j) r[j] = p(i, j);
  return r;
}

// Full sort of all (distance, index) pairs per query.
inline std::vector<std::vector<std::size_t>> knn(const ppu::PointSet& q,
                                                 const ppu::PointSet& s, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t j = 0; j < s.size(); ++j) all.push_back({dist2(row(q, i), row(s, j)), j});
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> r;
    for (std::size_t j = 0; j < k; ++j) r.push_back(all[j].second);
    out.push_back(r);
  }
  return out;
}

// Greedy max-min using a full distance matrix and explicit set scans.
inline std::vector<std::size_t> fps(const ppu::PointSet& p, std::size_t m, std::size_t start) {
  const std::size_t n = p.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) d[i][j] = dist2(row(p, i), row(p, j));
  std::vector<std::size_t> sel{start};
  while (sel.size() < m) {
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (std::find(sel.begin(), sel.end(), i) != sel.end()) continue;
      double mn = std::numeric_limits<double>::infinity();
      for (std::size_t s : sel) mn = std::min(mn, d[i][s]);
      if (mn > best) {
        best = mn;
        arg = i;
      }
    }
    sel.push_back(arg);
  }
  return sel;
}

inline std::vector<double> nn_sq(const ppu::PointSet& a, const ppu::PointSet& b) {
  std::vector<double> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < b.size(); ++j) mn = std::min(mn, dist2(row(a, i), row(b, j)));
    out.push_back(mn);
  }
  return out;
}

inline double modified_chamfer(const ppu::PointSet& p, const ppu::PointSet& q, double delta) {
  double a = 0.0, b = 0.0;
  for (double d : nn_sq(p, q)) a += d <= delta ? d : 0.0;
  for (double d : nn_sq(q, p)) b += d <= delta ? d : 0.0;
  return a / static_cast<double>(p.size()) + b / static_cast<double>(q.size());
}

inline double chamfer(const ppu::PointSet& p, const ppu::PointSet& q) {
  return modified_chamfer(p, q, std::numeric_limits<double>::infinity());
}

inline double hausdorff(const ppu::PointSet& p, const ppu::PointSet& q) {
  double m = 0.0;
  for (double d : nn_sq(p, q)) m = std::max(m, std::sqrt(d));
  for (double d : nn_sq(q, p)) m = std::max(m, std::sqrt(d));
  return m;
}

inline double mean_nn(const ppu::PointSet& p) {
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double mn = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < p.size(); ++j)
      if (j != i) mn = std::min(mn, dist2(row(p, i), row(p, j)));
    total += std::sqrt(mn);
  }
  return total / static_cast<double>(p.size());
}

// Triple-loop product of row-major matrices.
inline std::vector<double> matmul(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) c[i * n + j] += a[i * k + p] * b[p * n + j];
  return c;
}

}  // namespace oracle
