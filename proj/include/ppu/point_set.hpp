#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ppu/error.hpp"
#include "ppu/tensor.hpp"

namespace ppu {

// Ordered list of n points in d dimensions, stored row-major.
class PointSet {
 public:
  PointSet() = default;

  PointSet(std::size_t dim, std::vector<double> coords)
      : dim_(dim), coords_(std::move(coords)) {
    if (dim_ == 0) throw DimensionError("point dimension must be positive");
    if (coords_.size() % dim_ != 0) {
      throw DimensionError("coordinate count " + std::to_string(coords_.size()) +
                           " is not a multiple of dimension " +
                           std::to_string(dim_));
    }
  }

  static PointSet zeros(std::size_t n, std::size_t dim) {
    return PointSet(dim, std::vector<double>(n * dim, 0.0));
  }

  std::size_t size() const { return dim_ == 0 ? 0 : coords_.size() / dim_; }
  bool empty() const { return size() == 0; }
  std::size_t dim() const { return dim_; }
  // Row-view interface shared with feature tensors.
  std::size_t rows() const { return size(); }
  std::size_t cols() const { return dim_; }

  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(coords_).subspan(i * dim_, dim_);
  }
  std::span<double> row(std::size_t i) {
    return std::span<double>(coords_).subspan(i * dim_, dim_);
  }
  double operator()(std::size_t i, std::size_t j) const {
    return coords_[i * dim_ + j];
  }
  double& operator()(std::size_t i, std::size_t j) {
    return coords_[i * dim_ + j];
  }

  std::span<const double> data() const { return coords_; }
  std::span<double> data() { return coords_; }
  const std::vector<double>& coords() const { return coords_; }

  void push_back(std::span<const double> p) {
    if (dim_ == 0) dim_ = p.size();
    if (p.size() != dim_) throw DimensionError("point dimension mismatch");
    coords_.insert(coords_.end(), p.begin(), p.end());
  }

  bool all_finite() const {
    for (double v : coords_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  PointSet select(std::span<const std::size_t> indices) const {
    std::vector<double> out;
    out.reserve(indices.size() * dim_);
    for (std::size_t i : indices) {
      auto r = row(i);
      out.insert(out.end(), r.begin(), r.end());
    }
    return PointSet(dim_, std::move(out));
  }

  Tensor to_tensor(bool requires_grad = false) const {
    return Tensor::from({size(), dim_}, coords_, requires_grad);
  }

  static PointSet from_tensor(const Tensor& t) {
    if (t.rank() != 2) throw DimensionError("point tensor must be 2-D");
    auto d = t.data();
    return PointSet(t.cols(), std::vector<double>(d.begin(), d.end()));
  }

  friend bool operator==(const PointSet&, const PointSet&) = default;

 private:
  std::size_t dim_ = 0;
  std::vector<double> coords_;
};

// n x k neighbor table; row i lists source indices by nondecreasing distance.
struct NeighborIndex {
  std::size_t queries = 0;
  std::size_t k = 0;
  std::vector<std::size_t> indices;

  std::size_t operator()(std::size_t i, std::size_t j) const {
    return indices[i * k + j];
  }
  std::span<const std::size_t> row(std::size_t i) const {
    return std::span<const std::size_t>(indices).subspan(i * k, k);
  }
};

}  // namespace ppu
