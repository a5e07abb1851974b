#pragma once

// Differentiable tensor ops. Every op takes the tape first; when the tape is
// recording and an input requires gradients, the op registers its backward.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ppu/error.hpp"
#include "ppu/point_set.hpp"
#include "ppu/tensor.hpp"

namespace ppu {

namespace kernel {

// out[m x n] += a[m x k] * b[k x n]. Each output entry accumulates over k in
// ascending order independently of its row, so results do not depend on row
// order or row count. Rows are processed four at a time to reuse b.
inline void gemm_acc(std::size_t m, std::size_t k, std::size_t n,
                     const double* a, const double* b, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* o0 = out + i * n;
    double* o1 = o0 + n;
    double* o2 = o1 + n;
    double* o3 = o2 + n;
    const double* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s0 = a0[p], s1 = a0[k + p], s2 = a0[2 * k + p],
                   s3 = a0[3 * k + p];
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bj = br[j];
        o0[j] += s0 * bj;
        o1[j] += s1 * bj;
        o2[j] += s2 * bj;
        o3[j] += s3 * bj;
      }
    }
  }
  for (; i < m; ++i) {
    double* o = out + i * n;
    const double* ar = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ar[p];
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += s * br[j];
    }
  }
}

// da[m x k] += dy[m x n] * b^T, via a transposed copy of b so the inner loop
// runs over contiguous memory. Summation over n stays in ascending order.
inline void gemm_acc_bt(std::size_t m, std::size_t k, std::size_t n,
                        const double* dy, const double* b, double* da) {
  std::vector<double> bt(n * k);
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  }
  gemm_acc(m, n, k, dy, bt.data(), da);
}

// db[k x n] += a^T * dy, accumulating over m in ascending order.
inline void gemm_acc_at(std::size_t m, std::size_t k, std::size_t n,
                        const double* a, const double* dy, double* db) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    const double* g0 = dy + i * n;
    const double* g1 = g0 + n;
    const double* g2 = g1 + n;
    const double* g3 = g2 + n;
    const double* a0 = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s0 = a0[p], s1 = a0[k + p], s2 = a0[2 * k + p],
                   s3 = a0[3 * k + p];
      double* o = db + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        double v = o[j];
        v += s0 * g0[j];
        v += s1 * g1[j];
        v += s2 * g2[j];
        v += s3 * g3[j];
        o[j] = v;
      }
    }
  }
  for (; i < m; ++i) {
    const double* g = dy + i * n;
    const double* ar = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = ar[p];
      double* o = db + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += s * g[j];
    }
  }
}

}  // namespace kernel

enum class Activation { Relu, LeakyRelu };

inline std::string to_string(Activation a) {
  return a == Activation::Relu ? "relu" : "leaky_relu";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "leaky_relu") return Activation::LeakyRelu;
  throw ValidationError("unknown activation '" + s + "'");
}

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) +
                         " * " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  kernel::gemm_acc(m, k, n, a.data().data(), b.data().data(),
                   out.data().data());
  if (tape.wants({&a, &b})) {
    tape.record(out, [a, b, out, m, k, n]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        kernel::gemm_acc_bt(m, k, n, g.data(), b.data().data(),
                            a.grad().data());
      }
      if (b.requires_grad()) {
        kernel::gemm_acc_at(m, k, n, a.data().data(), g.data(),
                            b.grad().data());
      }
    });
  }
  return out;
}

// Shared-MLP layer: x[..., in] * weight[in x out] + bias[out], applied to
// every leading index. `bias` may be undefined.
inline Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight,
                     const Tensor& bias) {
  if (x.rank() < 2 || weight.rank() != 2 || x.cols() != weight.dim(0)) {
    throw DimensionError("linear shape mismatch: " + shape_str(x.shape()) +
                         " * " + shape_str(weight.shape()));
  }
  const std::size_t m = x.flat_rows(), k = weight.dim(0), n = weight.dim(1);
  if (bias.defined() && bias.numel() != n) {
    throw DimensionError("linear bias width mismatch");
  }
  Shape shape = x.shape();
  shape.back() = n;
  Tensor out = Tensor::zeros(shape);
  auto o = out.data();
  if (bias.defined()) {
    auto bv = bias.data();
    for (std::size_t i = 0; i < m; ++i) {
      std::copy(bv.begin(), bv.end(), o.begin() + i * n);
    }
  }
  kernel::gemm_acc(m, k, n, x.data().data(), weight.data().data(), o.data());
  if (tape.wants({&x, &weight, &bias})) {
    tape.record(out, [x, weight, bias, out, m, k, n]() mutable {
      auto g = out.grad();
      if (x.requires_grad()) {
        kernel::gemm_acc_bt(m, k, n, g.data(), weight.data().data(),
                            x.grad().data());
      }
      if (weight.requires_grad()) {
        kernel::gemm_acc_at(m, k, n, x.data().data(), g.data(),
                            weight.grad().data());
      }
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
      }
    });
  }
  return out;
}

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add shape mismatch: " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  Tensor out = Tensor::zeros(a.shape());
  auto o = out.data();
  auto av = a.data();
  auto bv = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = av[i] + bv[i];
  if (tape.wants({&a, &b})) {
    tape.record(out, [a, b, out]() mutable {
      auto g = out.grad();
      for (const Tensor* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gt = t->grad();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
      }
    });
  }
  return out;
}

// x * factor
inline Tensor scale(Tape& tape, const Tensor& x, double factor) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] * factor;
  if (tape.wants({&x})) {
    tape.record(out, [x, out, factor]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

// Row-wise affine map on an n x d tensor: x * factor + offset.
inline Tensor affine(Tape& tape, const Tensor& x, double factor,
                     std::span<const double> offset) {
  if (x.rank() != 2 || offset.size() != x.cols()) {
    throw DimensionError("affine offset width mismatch");
  }
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.data();
  auto xv = x.data();
  const std::size_t d = x.cols();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = xv[i] * factor + offset[i % d];
  }
  if (tape.wants({&x})) {
    tape.record(out, [x, out, factor]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
    });
  }
  return out;
}

inline Tensor sum(Tape& tape, const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (tape.wants({&x})) {
    tape.record(out, [x, out]() mutable {
      const double g = out.grad()[0];
      for (double& gx : x.grad()) gx += g;
    });
  }
  return out;
}

inline Tensor relu(Tape& tape, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (tape.wants({&x})) {
    tape.record(out, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      auto xv = x.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xv[i] > 0.0) gx[i] += g[i];
      }
    });
  }
  return out;
}

inline Tensor leaky_relu(Tape& tape, const Tensor& x, double slope = 0.01) {
  Tensor out = Tensor::zeros(x.shape());
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = xv[i] > 0.0 ? xv[i] : slope * xv[i];
  }
  if (tape.wants({&x})) {
    tape.record(out, [x, out, slope]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      auto xv = x.data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        gx[i] += xv[i] > 0.0 ? g[i] : slope * g[i];
      }
    });
  }
  return out;
}

inline Tensor activate(Tape& tape, const Tensor& x, Activation act) {
  return act == Activation::Relu ? relu(tape, x) : leaky_relu(tape, x);
}

// Concatenates along the last axis; all leading axes must agree.
inline Tensor concat_columns(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_columns of nothing");
  Shape lead = parts[0].shape();
  lead.pop_back();
  std::size_t total = 0;
  for (const Tensor& t : parts) {
    Shape l = t.shape();
    l.pop_back();
    if (l != lead) {
      throw DimensionError("concat_columns row mismatch: " +
                           shape_str(parts[0].shape()) + " vs " +
                           shape_str(t.shape()));
    }
    total += t.cols();
  }
  const std::size_t rows = shape_numel(lead);
  Shape shape = lead;
  shape.push_back(total);
  Tensor out = Tensor::zeros(shape);
  auto o = out.data();
  std::size_t offset = 0;
  for (const Tensor& t : parts) {
    const std::size_t c = t.cols();
    auto tv = t.data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(tv.begin() + r * c, c, o.begin() + r * total + offset);
    }
    offset += c;
  }
  bool wants = false;
  for (const Tensor& t : parts) wants = wants || tape.wants({&t});
  if (wants) {
    tape.record(out, [parts, out, rows, total]() mutable {
      auto g = out.grad();
      std::size_t offset = 0;
      for (const Tensor& t : parts) {
        const std::size_t c = t.cols();
        if (t.requires_grad()) {
          auto gt = t.grad();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < c; ++j) {
              gt[r * c + j] += g[r * total + offset + j];
            }
          }
        }
        offset += c;
      }
    });
  }
  return out;
}

// out[i][j] = x[idx(i, j)]: groups rows of a 2-D tensor into [q x k x c].
inline Tensor gather_rows(Tape& tape, const Tensor& x, const NeighborIndex& idx) {
  if (x.rank() != 2) throw DimensionError("gather_rows expects a 2-D tensor");
  const std::size_t n = x.dim(0), c = x.cols();
  for (std::size_t s : idx.indices) {
    if (s >= n) {
      throw DimensionError("gather_rows index " + std::to_string(s) +
                           " out of range for " + std::to_string(n) + " rows");
    }
  }
  Tensor out = Tensor::zeros({idx.queries, idx.k, c});
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t r = 0; r < idx.indices.size(); ++r) {
    std::copy_n(xv.begin() + idx.indices[r] * c, c, o.begin() + r * c);
  }
  if (tape.wants({&x})) {
    tape.record(out, [x, out, idx, c]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < idx.indices.size(); ++r) {
        double* dst = gx.data() + idx.indices[r] * c;
        const double* src = g.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

// Picks rows of a 2-D tensor (repeats allowed) into an [m x c] tensor.
inline Tensor select_rows(Tape& tape, const Tensor& x,
                          std::vector<std::size_t> rows) {
  if (x.rank() != 2) throw DimensionError("select_rows expects a 2-D tensor");
  const std::size_t n = x.dim(0), c = x.cols();
  Tensor out = Tensor::zeros({rows.size(), c});
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw DimensionError("select_rows index out of range");
    std::copy_n(xv.begin() + rows[r] * c, c, o.begin() + r * c);
  }
  if (tape.wants({&x})) {
    tape.record(out, [x, out, rows = std::move(rows), c]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t j = 0; j < c; ++j) gx[rows[r] * c + j] += g[r * c + j];
      }
    });
  }
  return out;
}

// Max over the group axis of [n x k x c]; gradient goes to the first argmax.
inline Tensor max_over_group(Tape& tape, const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("max_over_group expects [n x k x c]");
  const std::size_t n = x.dim(0), k = x.dim(1), c = x.dim(2);
  if (k == 0) throw DimensionError("max_over_group on an empty group");
  Tensor out = Tensor::zeros({n, c});
  std::vector<std::size_t> argmax(n * c, 0);
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* base = xv.data() + i * k * c;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double best = base[ch];
      std::size_t arg = 0;
      for (std::size_t j = 1; j < k; ++j) {
        const double v = base[j * c + ch];
        if (v > best) {
          best = v;
          arg = j;
        }
      }
      o[i * c + ch] = best;
      argmax[i * c + ch] = arg;
    }
  }
  if (tape.wants({&x})) {
    tape.record(out, [x, out, argmax = std::move(argmax), k, c]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      for (std::size_t r = 0; r < argmax.size(); ++r) {
        const std::size_t i = r / c, ch = r % c;
        gx[(i * k + argmax[r]) * c + ch] += g[r];
      }
    });
  }
  return out;
}

// max_over_group(gather_rows(x, idx)) without materializing the groups. The
// first group member holding the maximum receives the gradient.
inline Tensor gather_max(Tape& tape, const Tensor& x, const NeighborIndex& idx) {
  if (x.rank() != 2) throw DimensionError("gather_max expects a 2-D tensor");
  const std::size_t n = x.dim(0), c = x.cols(), k = idx.k;
  if (k == 0) throw DimensionError("gather_max on an empty group");
  for (std::size_t s : idx.indices) {
    if (s >= n) throw DimensionError("gather_max index out of range");
  }
  Tensor out = Tensor::zeros({idx.queries, c});
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t i = 0; i < idx.queries; ++i) {
    const std::size_t* row = idx.indices.data() + i * k;
    double* best = o.data() + i * c;
    std::copy_n(xv.data() + row[0] * c, c, best);
    for (std::size_t j = 1; j < k; ++j) {
      const double* v = xv.data() + row[j] * c;
      for (std::size_t ch = 0; ch < c; ++ch) best[ch] = std::max(best[ch], v[ch]);
    }
  }
  if (tape.wants({&x})) {
    tape.record(out, [x, out, idx, c, k]() mutable {
      auto g = out.grad();
      auto gx = x.grad();
      auto xv = x.data();
      auto o = out.data();
      for (std::size_t i = 0; i < idx.queries; ++i) {
        const std::size_t* row = idx.indices.data() + i * k;
        for (std::size_t ch = 0; ch < c; ++ch) {
          const double best = o[i * c + ch];
          std::size_t j = 0;
          while (j + 1 < k && xv[row[j] * c + ch] != best) ++j;
          gx[row[j] * c + ch] += g[i * c + ch];
        }
      }
    });
  }
  return out;
}

// First layer of the feature expansion. Rows i and n+i of the [2n x out]
// result are x_i * W[0:C] + b with the code -1 (copy A) or +1 (copy B)
// times the last weight row added, i.e. linear() on [x_i, code] rows.
inline Tensor code_linear(Tape& tape, const Tensor& x, const Tensor& weight,
                          const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || weight.dim(0) != x.cols() + 1 ||
      bias.numel() != weight.dim(1)) {
    throw DimensionError("code_linear shape mismatch: " + shape_str(x.shape()) +
                         " * " + shape_str(weight.shape()));
  }
  const std::size_t n = x.rows(), k = x.cols(), m = weight.dim(1);
  Tensor shared = Tensor::zeros({n, m});
  auto sv = shared.data();
  auto bv = bias.data();
  for (std::size_t i = 0; i < n; ++i) std::copy(bv.begin(), bv.end(), sv.begin() + i * m);
  kernel::gemm_acc(n, k, m, x.data().data(), weight.data().data(), sv.data());
  Tensor out = Tensor::zeros({2 * n, m});
  auto o = out.data();
  const double* code_w = weight.data().data() + k * m;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      o[i * m + j] = sv[i * m + j] + -1.0 * code_w[j];
      o[(n + i) * m + j] = sv[i * m + j] + 1.0 * code_w[j];
    }
  }
  if (tape.wants({&x, &weight, &bias})) {
    tape.record(out, [x, weight, bias, out, n, k, m]() mutable {
      auto g = out.grad();
      std::vector<double> pair(n * m);
      for (std::size_t r = 0; r < n * m; ++r) pair[r] = g[r] + g[n * m + r];
      if (x.requires_grad()) {
        kernel::gemm_acc_bt(n, k, m, pair.data(), weight.data().data(),
                            x.grad().data());
      }
      if (weight.requires_grad()) {
        auto gw = weight.grad();
        kernel::gemm_acc_at(n, k, m, x.data().data(), pair.data(), gw.data());
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            gw[k * m + j] += g[(n + i) * m + j] - g[i * m + j];
          }
        }
      }
      if (bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t r = 0; r < n * m; ++r) gb[r % m] += pair[r];
      }
    });
  }
  return out;
}

}  // namespace ppu
