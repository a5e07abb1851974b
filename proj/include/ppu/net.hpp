#pragma once

// The upsampling cascade. Each unit extracts per-point features with dense
// blocks, optionally adds features interpolated from the previous level,
// duplicates the features with a +-1 code and regresses coordinate residuals.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ppu/error.hpp"
#include "ppu/geom.hpp"
#include "ppu/interpolate.hpp"
#include "ppu/ops.hpp"
#include "ppu/point_set.hpp"
#include "ppu/tensor.hpp"

namespace ppu {

struct NetConfig {
  std::size_t levels = 4;
  std::size_t dim = 3;
  std::size_t compress_width = 24;  // C'
  std::size_t growth = 12;          // G
  std::size_t blocks = 4;
  std::size_t layers_per_block = 2;
  std::size_t knn_k = 32;   // feature-space neighborhood inside dense blocks
  std::size_t interp_k = 5; // spatial neighborhood of the inter-level skip
  std::vector<std::size_t> expansion_widths{192, 96};
  Activation activation = Activation::Relu;
  bool use_feature_knn = true;
  bool use_dense_links = true;

  std::size_t block_output_width() const {
    return compress_width + layers_per_block * growth;
  }
  // C: initial MLP output concatenated with every block output.
  std::size_t feature_width() const {
    return compress_width + blocks * block_output_width();
  }
  std::size_t block_input_width(std::size_t b) const {
    if (use_dense_links) return dim + compress_width + b * block_output_width();
    return dim + (b == 0 ? compress_width : block_output_width());
  }
  std::size_t dense_layer_input_width(std::size_t j) const {
    return compress_width + j * growth;
  }
  std::size_t dense_layer_output_width(std::size_t j) const {
    return use_dense_links ? growth : compress_width + (j + 1) * growth;
  }

  void validate() const {
    if (levels < 1) throw ValidationError("network needs at least one level");
    if (dim != 2 && dim != 3) throw ValidationError("point dimension must be 2 or 3");
    if (compress_width == 0 || growth == 0 || blocks == 0 ||
        layers_per_block == 0) {
      throw ValidationError("network widths and depths must be positive");
    }
    if (knn_k == 0 || interp_k == 0) {
      throw ValidationError("neighborhood sizes must be positive");
    }
    for (std::size_t w : expansion_widths) {
      if (w == 0) throw ValidationError("expansion widths must be positive");
    }
  }
};

// One shared-MLP layer.
struct Dense {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

struct DenseBlockParams {
  Dense compress;
  std::vector<Dense> layers;
};

struct UnitParams {
  Dense initial;
  std::vector<DenseBlockParams> blocks;
  std::vector<Dense> expansion;  // last entry is the residual head
};

struct NamedTensor {
  std::string path;
  Tensor tensor;
};

struct NetworkParams {
  NetConfig config;
  std::vector<UnitParams> units;

  // Every learnable tensor in a fixed order, with its path.
  std::vector<NamedTensor> named() const {
    std::vector<NamedTensor> out;
    auto add = [&](const std::string& prefix, const Dense& d) {
      out.push_back({prefix + "/weight", d.weight});
      out.push_back({prefix + "/bias", d.bias});
    };
    for (std::size_t u = 0; u < units.size(); ++u) {
      const std::string unit = "unit" + std::to_string(u);
      add(unit + "/initial", units[u].initial);
      for (std::size_t b = 0; b < units[u].blocks.size(); ++b) {
        const std::string block = unit + "/block" + std::to_string(b);
        add(block + "/compress", units[u].blocks[b].compress);
        for (std::size_t l = 0; l < units[u].blocks[b].layers.size(); ++l) {
          add(block + "/layer" + std::to_string(l), units[u].blocks[b].layers[l]);
        }
      }
      for (std::size_t e = 0; e < units[u].expansion.size(); ++e) {
        add(unit + "/expand" + std::to_string(e), units[u].expansion[e]);
      }
    }
    return out;
  }

  std::vector<Tensor> tensors() const {
    std::vector<Tensor> out;
    for (auto& nt : named()) out.push_back(nt.tensor);
    return out;
  }

  // Unit index owning each tensor of tensors().
  std::vector<std::size_t> owners() const {
    std::vector<std::size_t> out;
    for (auto& nt : named()) {
      out.push_back(std::stoul(nt.path.substr(4, nt.path.find('/') - 4)));
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (auto& nt : named()) n += nt.tensor.numel();
    return n;
  }

  void set_unit_trainable(std::size_t unit, bool trainable) const {
    for (auto& nt : named()) {
      if (std::stoul(nt.path.substr(4, nt.path.find('/') - 4)) == unit) {
        nt.tensor.set_requires_grad(trainable);
      }
    }
  }

  // Deep copy; the result shares no storage with *this.
  NetworkParams clone() const {
    NetworkParams copy = *this;
    auto deep = [](Dense& d) {
      d.weight = d.weight.clone();
      d.bias = d.bias.clone();
    };
    for (auto& unit : copy.units) {
      deep(unit.initial);
      for (auto& block : unit.blocks) {
        deep(block.compress);
        for (auto& layer : block.layers) deep(layer);
      }
      for (auto& layer : unit.expansion) deep(layer);
    }
    return copy;
  }
};

namespace detail {

inline Dense glorot_dense(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> w(in * out);
  for (double& v : w) v = dist(rng);
  return {Tensor::from({in, out}, std::move(w), true),
          Tensor::zeros({out}, true)};
}

inline Dense zero_dense(std::size_t in, std::size_t out) {
  return {Tensor::zeros({in, out}, true), Tensor::zeros({out}, true)};
}

}  // namespace detail

// Glorot-uniform hidden layers, zero biases and an all-zero residual head,
// so an untrained unit reproduces each input point twice.
inline NetworkParams init_network(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  NetworkParams params;
  params.config = config;
  for (std::size_t u = 0; u < config.levels; ++u) {
    UnitParams unit;
    unit.initial = detail::glorot_dense(config.dim, config.compress_width, rng);
    for (std::size_t b = 0; b < config.blocks; ++b) {
      DenseBlockParams block;
      block.compress = detail::glorot_dense(config.block_input_width(b),
                                            config.compress_width, rng);
      for (std::size_t l = 0; l < config.layers_per_block; ++l) {
        block.layers.push_back(detail::glorot_dense(
            config.dense_layer_input_width(l), config.dense_layer_output_width(l),
            rng));
      }
      unit.blocks.push_back(std::move(block));
    }
    std::size_t in = config.feature_width() + 1;
    for (std::size_t w : config.expansion_widths) {
      unit.expansion.push_back(detail::glorot_dense(in, w, rng));
      in = w;
    }
    unit.expansion.push_back(detail::zero_dense(in, config.dim));
    params.units.push_back(std::move(unit));
  }
  return params;
}

// Compress -> dense layers -> group by kNN -> max-pool. Returns [n x 48] for
// the default widths. Neighborhoods come from the compressed features, or
// from `coords` when feature kNN is disabled. Grouping gathers plain neighbor
// rows, so the row-wise dense layers are evaluated once per point and the
// gathered result equals running them on every grouped copy.
inline Tensor dense_block_forward(Tape& tape, const Tensor& block_input,
                                  const PointSet& coords,
                                  const DenseBlockParams& params,
                                  const NetConfig& cfg) {
  const std::size_t n = block_input.rows();
  if (cfg.knn_k > n) {
    throw ValidationError("dense block: k=" + std::to_string(cfg.knn_k) +
                          " exceeds " + std::to_string(n) + " points");
  }
  Tensor compressed = activate(
      tape, linear(tape, block_input, params.compress.weight, params.compress.bias),
      cfg.activation);
  const NeighborIndex nbr = cfg.use_feature_knn ? knn(compressed, compressed, cfg.knn_k)
                                                : knn(coords, coords, cfg.knn_k);
  std::vector<Tensor> parts{compressed};
  Tensor current = compressed;
  for (const Dense& layer : params.layers) {
    Tensor in = cfg.use_dense_links ? concat_columns(tape, parts) : current;
    current = activate(tape, linear(tape, in, layer.weight, layer.bias),
                       cfg.activation);
    parts.push_back(current);
  }
  Tensor per_point = cfg.use_dense_links ? concat_columns(tape, parts) : current;
  return gather_max(tape, per_point, nbr);
}

// Per-point features [n x C] of a (normalized) patch.
inline Tensor extract_features(Tape& tape, const Tensor& points,
                               const UnitParams& unit, const NetConfig& cfg) {
  if (points.rank() != 2 || points.cols() != cfg.dim) {
    throw DimensionError("extract_features: expected [n x " +
                         std::to_string(cfg.dim) + "] points, got " +
                         shape_str(points.shape()));
  }
  if (points.rows() < cfg.knn_k) {
    throw ValidationError("extract_features: " + std::to_string(points.rows()) +
                          " points is fewer than k=" + std::to_string(cfg.knn_k));
  }
  const PointSet coords = PointSet::from_tensor(points);
  Tensor initial = activate(
      tape, linear(tape, points, unit.initial.weight, unit.initial.bias),
      cfg.activation);
  std::vector<Tensor> outputs{initial};
  for (const DenseBlockParams& block : unit.blocks) {
    std::vector<Tensor> inputs{points};
    if (cfg.use_dense_links) {
      inputs.insert(inputs.end(), outputs.begin(), outputs.end());
    } else {
      inputs.push_back(outputs.back());
    }
    outputs.push_back(
        dense_block_forward(tape, concat_columns(tape, inputs), coords, block, cfg));
  }
  return concat_columns(tape, outputs);
}

// Residuals [2n x d] for the duplicated features: copy A (code -1) rows in
// input order, then copy B (code +1).
inline Tensor expansion_residuals(Tape& tape, const Tensor& feats,
                                  const UnitParams& unit, const NetConfig& cfg) {
  const Dense& first = unit.expansion.front();
  Tensor x = code_linear(tape, feats, first.weight, first.bias);
  for (std::size_t e = 1; e < unit.expansion.size(); ++e) {
    x = activate(tape, x, cfg.activation);
    const Dense& layer = unit.expansion[e];
    x = linear(tape, x, layer.weight, layer.bias);
  }
  return x;
}

inline std::vector<std::size_t> duplicate_rows(std::size_t n) {
  std::vector<std::size_t> twice(2 * n);
  for (std::size_t i = 0; i < n; ++i) twice[i] = twice[n + i] = i;
  return twice;
}

// [2n x d] = duplicated input coordinates + regressed residuals.
inline Tensor expand_features(Tape& tape, const Tensor& points,
                              const Tensor& feats, const UnitParams& unit,
                              const NetConfig& cfg) {
  if (feats.rows() != points.rows()) {
    throw DimensionError("expand_features: feature rows do not match points");
  }
  Tensor residual = expansion_residuals(tape, feats, unit, cfg);
  return add(tape, select_rows(tape, points, duplicate_rows(points.rows())),
             residual);
}

// Previous level's points and features, expressed in the current patch frame.
struct PrevContext {
  PointSet points;
  Tensor features;
};

struct UnitOutput {
  Tensor points;    // [2n x d], patch frame
  Tensor residual;  // [2n x d], patch frame
  Tensor features;  // [n x C] after the inter-level skip
};

inline UnitOutput unit_forward(Tape& tape, const Tensor& patch,
                               const std::optional<PrevContext>& prev,
                               const UnitParams& unit, const NetConfig& cfg) {
  Tensor feats = extract_features(tape, patch, unit, cfg);
  if (prev) {
    const std::size_t k = std::min(cfg.interp_k, prev->points.size());
    Tensor interpolated =
        bilateral_interpolate(tape, PointSet::from_tensor(patch), feats,
                              prev->points, prev->features, k);
    feats = add(tape, interpolated, feats);
  }
  UnitOutput out;
  out.features = feats;
  out.residual = expansion_residuals(tape, feats, unit, cfg);
  out.points = add(tape, select_rows(tape, patch, duplicate_rows(patch.rows())),
                   out.residual);
  return out;
}

// Global-frame coordinates of a unit's output: duplicated global inputs plus
// residuals scaled back out of the patch frame.
inline Tensor to_global(Tape& tape, const Tensor& global_inputs,
                        const Tensor& residual, double patch_scale) {
  return add(tape,
             select_rows(tape, global_inputs, duplicate_rows(global_inputs.rows())),
             scale(tape, residual, patch_scale));
}

// Upsamples by 2^levels: per level, overlapping patches are upsampled
// independently, then merged and resampled to twice the input count.
inline PointSet cascade_infer(const PointSet& input, const NetworkParams& params,
                              std::size_t levels, std::size_t patch_size,
                              double coverage_factor = 3.0) {
  const NetConfig& cfg = params.config;
  if (levels == 0 || levels > params.units.size()) {
    throw ValidationError("cascade_infer: " + std::to_string(levels) +
                          " levels requested, network has " +
                          std::to_string(params.units.size()));
  }
  if (input.dim() != cfg.dim) {
    throw DimensionError("cascade_infer: input dimension " +
                         std::to_string(input.dim()) + " but network expects " +
                         std::to_string(cfg.dim));
  }
  if (patch_size < cfg.knn_k || input.size() < cfg.knn_k) {
    throw ValidationError("cascade_infer: patch size " +
                          std::to_string(patch_size) + " and input size " +
                          std::to_string(input.size()) +
                          " must both be at least k=" + std::to_string(cfg.knn_k));
  }
  if (!input.all_finite()) throw NumericError("cascade_infer: non-finite input");

  Tape tape(false);
  PointSet current = input;
  std::optional<PrevContext> cache;  // global frame
  for (std::size_t level = 1; level <= levels; ++level) {
    const std::size_t n = current.size();
    const std::size_t local_n = std::min(patch_size, n);
    auto patches = extract_inference_patches(current, local_n, coverage_factor);
    std::vector<PointSet> partials;
    Tensor level_feats = Tensor::zeros({n, cfg.feature_width()});
    std::vector<bool> filled(n, false);
    const Tensor current_t = current.to_tensor();
    for (const InferencePatch& patch : patches) {
      std::optional<PrevContext> ctx;
      if (cache) {
        const std::size_t m = std::min(local_n, cache->points.size());
        auto near = knn_point(current.row(patch.query_index), cache->points, m);
        ctx = PrevContext{patch.transform.apply(cache->points.select(near)),
                          select_rows(tape, cache->features, near)};
      }
      UnitOutput out = unit_forward(tape, patch.points.to_tensor(), ctx,
                                    params.units[level - 1], cfg);
      Tensor global = to_global(tape, select_rows(tape, current_t, patch.indices),
                                out.residual, patch.transform.scale);
      partials.push_back(PointSet::from_tensor(global));
      for (std::size_t r = 0; r < patch.indices.size(); ++r) {
        const std::size_t i = patch.indices[r];
        if (filled[i]) continue;
        filled[i] = true;
        auto src = out.features.row(r);
        std::copy(src.begin(), src.end(),
                  level_feats.data().begin() + i * cfg.feature_width());
      }
    }
    cache = PrevContext{current, level_feats};
    current = merge_and_resample(partials, 2 * n);
    if (!current.all_finite()) {
      throw NumericError("cascade_infer: non-finite output at level " +
                         std::to_string(level));
    }
  }
  return current;
}

// Prediction and matched reference of one cascade level, in that level's
// normalized patch frame.
struct LevelPair {
  Tensor prediction;
  PointSet reference;
  PatchPair patches;
};

struct TrainForward {
  Tensor prediction;  // P at the target level
  PointSet reference; // Q at the target level
  std::vector<LevelPair> levels;
};

// Training-time cascade up to `target_level`. The first level draws its
// patches from the input and the full-resolution reference; each later level
// re-extracts patches from the previous prediction (kept differentiable) and
// the previous reference patch.
template <typename Rng>
TrainForward cascade_train_forward(Tape& tape, const PointSet& input,
                                   const PointSet& full_reference,
                                   const NetworkParams& params,
                                   std::size_t target_level,
                                   std::size_t patch_size, Rng& rng) {
  const NetConfig& cfg = params.config;
  if (target_level == 0 || target_level > params.units.size()) {
    throw ValidationError("cascade_train_forward: target level out of range");
  }
  const std::size_t expected = (std::size_t{1} << target_level) * input.size();
  if (full_reference.size() < expected) {
    throw ValidationError("cascade_train_forward: reference has " +
                          std::to_string(full_reference.size()) +
                          " points, target level needs " +
                          std::to_string(expected));
  }
  TrainForward result;
  PointSet prev_values = input;
  Tensor prev_global = input.to_tensor();
  PointSet prev_reference = full_reference;
  std::optional<PrevContext> cache;  // global frame
  for (std::size_t level = 1; level <= target_level; ++level) {
    const std::size_t local_n = std::min(patch_size, prev_values.size());
    PatchPair pair = extract_training_patches(prev_values, prev_reference, local_n,
                                              target_level, level, rng);
    const PatchTransform& t = pair.transform;
    Tensor global_in = select_rows(tape, prev_global, pair.input_indices);
    Tensor local_in = affine(tape, global_in, 1.0 / t.scale, t.offset());
    std::optional<PrevContext> ctx;
    if (cache) ctx = PrevContext{t.apply(cache->points), cache->features};
    UnitOutput out = unit_forward(tape, local_in, ctx, params.units[level - 1], cfg);

    cache = PrevContext{prev_values.select(pair.input_indices), out.features};
    prev_global = to_global(tape, global_in, out.residual, t.scale);
    prev_values = PointSet::from_tensor(prev_global);
    prev_reference = prev_reference.select(pair.reference_indices);
    result.levels.push_back({out.points, pair.reference_patch, std::move(pair)});
  }
  result.prediction = result.levels.back().prediction;
  result.reference = result.levels.back().reference;
  return result;
}

}  // namespace ppu
