#pragma once

// Robustness sweeps: perturb the input (Gaussian noise or random point
// dropping), upsample it again and measure the result against a reference.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ppu/curve.hpp"
#include "ppu/error.hpp"
#include "ppu/metrics.hpp"
#include "ppu/net.hpp"
#include "ppu/point_io.hpp"
#include "ppu/trainer.hpp"

namespace ppu {

enum class SweepKind { Noise, Drop };

inline std::string to_string(SweepKind k) { return k == SweepKind::Noise ? "noise" : "drop"; }

inline const std::vector<double>& default_noise_levels() {
  static const std::vector<double> v{0.0, 0.0025, 0.005, 0.01, 0.015, 0.02};
  return v;
}

inline const std::vector<double>& default_drop_levels() {
  static const std::vector<double> v{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  return v;
}

// Comma-separated decimals, e.g. "0,0.0025,0.005".
inline std::vector<double> parse_levels(const std::string& text) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(',', pos);
    if (end == std::string::npos) end = text.size();
    const std::string item = text.substr(pos, end - pos);
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !std::isfinite(v) || v < 0.0) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw ValidationError("bad sweep level '" + item + "'");
    }
    pos = end + 1;
  }
  return out;
}

// Gaussian noise with std = level * bounding-box diagonal.
inline PointSet add_noise(const PointSet& points, double level, std::mt19937_64& rng) {
  PointSet out = points;
  const double sigma = level * detail::bbox_diagonal(points);
  if (sigma > 0.0) {
    std::normal_distribution<double> g(0.0, sigma);
    for (double& v : out.data()) v += g(rng);
  }
  return out;
}

// Removes round(fraction * n) points chosen uniformly; survivors keep order.
inline PointSet drop_points(const PointSet& points, double fraction, std::mt19937_64& rng) {
  if (fraction < 0.0 || fraction >= 1.0) {
    throw ValidationError("drop fraction must lie in [0, 1)");
  }
  const std::size_t n = points.size();
  const auto drop = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> keep(order.begin() + static_cast<std::ptrdiff_t>(drop), order.end());
  std::sort(keep.begin(), keep.end());
  return points.select(keep);
}

struct SweepRow {
  SweepKind kind = SweepKind::Noise;
  double level = 0.0;
  std::size_t input_points = 0;
  std::size_t output_points = 0;
  double chamfer = 0.0;
  double hausdorff = 0.0;
  std::optional<double> point_to_curve;
};

struct SweepCase {
  PointSet input;
  PointSet reference;
  std::optional<CurveSpec> curve;
};

struct SweepSettings {
  std::size_t levels = 1;
  std::size_t patch_size = 50;
  double coverage = 3.0;
  std::uint64_t seed = 0;
};

// One row per level, metrics averaged over the cases. Each (level, case) pair
// draws its perturbation from its own seeded generator.
inline std::vector<SweepRow> run_sweep(SweepKind kind, const std::vector<double>& levels,
                                       const std::vector<SweepCase>& cases,
                                       const NetworkParams& params,
                                       const SweepSettings& s) {
  if (cases.empty()) throw ValidationError("sweep needs at least one input");
  std::vector<SweepRow> rows;
  for (std::size_t li = 0; li < levels.size(); ++li) {
    SweepRow row{kind, levels[li], 0, 0, 0.0, 0.0, std::nullopt};
    double p2c = 0.0;
    bool have_curve = true;
    for (std::size_t c = 0; c < cases.size(); ++c) {
      std::seed_seq seq{s.seed, std::uint64_t{li}, std::uint64_t{c},
                        std::uint64_t{kind == SweepKind::Noise ? 0u : 1u}};
      std::mt19937_64 rng(seq);
      const PointSet in = kind == SweepKind::Noise ? add_noise(cases[c].input, levels[li], rng)
                                                   : drop_points(cases[c].input, levels[li], rng);
      const PointSet out = cascade_infer(in, params, s.levels, s.patch_size, s.coverage);
      const std::optional<ParametricCurve> curve =
          cases[c].curve ? std::optional<ParametricCurve>(ParametricCurve(*cases[c].curve))
                         : std::nullopt;
      const MetricsReport m = evaluate_metrics(out, cases[c].reference, curve ? &*curve : nullptr);
      row.input_points += in.size();
      row.output_points += out.size();
      row.chamfer += m.chamfer;
      row.hausdorff += m.hausdorff;
      if (m.point_to_curve) {
        p2c += *m.point_to_curve;
      } else {
        have_curve = false;
      }
    }
    const double n = static_cast<double>(cases.size());
    row.chamfer /= n;
    row.hausdorff /= n;
    if (have_curve) row.point_to_curve = p2c / n;
    rows.push_back(row);
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string s = "sweep,level,input_points,output_points,chamfer,hausdorff,point_to_curve\n";
  for (const SweepRow& r : rows) {
    s += to_string(r.kind) + "," + format_double(r.level) + "," +
         std::to_string(r.input_points) + "," + std::to_string(r.output_points) + "," +
         format_double(r.chamfer) + "," + format_double(r.hausdorff) + "," +
         (r.point_to_curve ? format_double(*r.point_to_curve) : std::string()) + "\n";
  }
  return s;
}

// Ranks with ties sharing their mean rank.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
    i = j + 1;
  }
  return rank;
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ValidationError("spearman needs two equal-length samples of size >= 2");
  }
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace ppu
