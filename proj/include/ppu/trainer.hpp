#pragma once

// Progressive end-to-end training: 2L-1 stages, each new unit first trained
// with its predecessors frozen, then jointly with all of them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ppu/adam.hpp"
#include "ppu/checkpoint.hpp"
#include "ppu/dataset.hpp"
#include "ppu/error.hpp"
#include "ppu/loss.hpp"
#include "ppu/net.hpp"
#include "ppu/ops.hpp"
#include "ppu/point_io.hpp"

namespace ppu {

struct AugmentConfig {
  bool rotate = true;
  double scale_min = 0.8;
  double scale_max = 1.2;
  // Gaussian noise std as a fraction of the input's bounding-box diagonal.
  double noise_fraction = 0.0025;
};

struct TrainConfig {
  std::size_t levels = 4;
  std::size_t patch_size = 50;
  std::size_t batch_size = 28;
  double learning_rate = 1e-3;
  std::size_t steps_per_stage = 500;
  AugmentConfig augment;
  LossConfig loss;
  std::uint64_t seed = 0;
  bool loss_all_levels = false;

  void validate() const {
    if (levels < 1) throw ValidationError("training needs at least one level");
    if (batch_size < 1) throw ValidationError("batch size must be at least 1");
    if (patch_size < 1) throw ValidationError("patch size must be at least 1");
    if (!(learning_rate >= 0.0)) throw ValidationError("learning rate must be >= 0");
    if (!(augment.noise_fraction >= 0.0)) {
      throw ValidationError("noise fraction must be >= 0");
    }
    if (!(augment.scale_min > 0.0) || augment.scale_max < augment.scale_min) {
      throw ValidationError("scale range must be positive and ordered");
    }
    loss.validate();
  }
};

struct StageSpec {
  std::size_t index = 1;   // 1-based
  std::size_t target = 1;  // target level, 1-based
  std::vector<std::size_t> frozen;  // 1-based unit numbers

  bool is_frozen(std::size_t unit) const {
    return std::find(frozen.begin(), frozen.end(), unit) != frozen.end();
  }
  // Units taking part in this stage's forward pass and not frozen.
  bool trains(std::size_t unit) const { return unit <= target && !is_frozen(unit); }
};

inline std::vector<StageSpec> build_schedule(std::size_t levels) {
  if (levels < 1) throw ValidationError("schedule needs at least one level");
  std::vector<StageSpec> stages{{1, 1, {}}};
  for (std::size_t u = 2; u <= levels; ++u) {
    std::vector<std::size_t> earlier(u - 1);
    for (std::size_t i = 0; i + 1 < u; ++i) earlier[i] = i + 1;
    stages.push_back({stages.size() + 1, u, earlier});
    stages.push_back({stages.size() + 1, u, {}});
  }
  return stages;
}

namespace detail {

inline std::vector<double> random_rotation(std::size_t dim, std::mt19937_64& rng) {
  if (dim == 2) {
    std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
    const double a = angle(rng);
    return {std::cos(a), -std::sin(a), std::sin(a), std::cos(a)};
  }
  std::normal_distribution<double> g(0.0, 1.0);
  double w = g(rng), x = g(rng), y = g(rng), z = g(rng);
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  w /= n, x /= n, y /= n, z /= n;
  return {1 - 2 * (y * y + z * z), 2 * (x * y - z * w),     2 * (x * z + y * w),
          2 * (x * y + z * w),     1 - 2 * (x * x + z * z), 2 * (y * z - x * w),
          2 * (x * z - y * w),     2 * (y * z + x * w),     1 - 2 * (x * x + y * y)};
}

inline PointSet transform_points(const PointSet& p, const std::vector<double>& rot,
                                 double s) {
  const std::size_t d = p.dim();
  PointSet out = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t r = 0; r < d; ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < d; ++c) acc += rot[r * d + c] * p(i, c);
      out(i, r) = s * acc;
    }
  }
  return out;
}

inline double bbox_diagonal(const PointSet& p) {
  double sq = 0.0;
  for (std::size_t j = 0; j < p.dim(); ++j) {
    double lo = p(0, j), hi = p(0, j);
    for (std::size_t i = 0; i < p.size(); ++i) {
      lo = std::min(lo, p(i, j));
      hi = std::max(hi, p(i, j));
    }
    sq += (hi - lo) * (hi - lo);
  }
  return std::sqrt(sq);
}

}  // namespace detail

// Explicit augmentation parameters, mostly for tests.
struct Augmentation {
  std::vector<double> rotation;  // row-major d x d
  double scale = 1.0;
  double noise_std = 0.0;
};

// Applies one rotation and scale to the input and every reference; Gaussian
// noise perturbs the input only.
inline TrainingExample apply_augmentation(const TrainingExample& ex,
                                          const Augmentation& aug,
                                          std::mt19937_64& rng) {
  TrainingExample out = ex;
  out.input = detail::transform_points(ex.input, aug.rotation, aug.scale);
  for (auto& ref : out.references) {
    ref = detail::transform_points(ref, aug.rotation, aug.scale);
  }
  if (aug.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, aug.noise_std);
    for (double& v : out.input.data()) v += noise(rng);
    out.noise_free = false;
  }
  return out;
}

inline TrainingExample augment_example(const TrainingExample& ex,
                                       const AugmentConfig& cfg,
                                       std::mt19937_64& rng) {
  const std::size_t d = ex.input.dim();
  Augmentation aug;
  if (cfg.rotate) {
    aug.rotation = detail::random_rotation(d, rng);
  } else {
    aug.rotation.assign(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) aug.rotation[i * d + i] = 1.0;
  }
  if (cfg.scale_max > cfg.scale_min) {
    std::uniform_real_distribution<double> s(cfg.scale_min, cfg.scale_max);
    aug.scale = s(rng);
  } else {
    aug.scale = cfg.scale_min;
  }
  const double diag = detail::bbox_diagonal(
      detail::transform_points(ex.input, aug.rotation, aug.scale));
  aug.noise_std = cfg.noise_fraction * diag;
  return apply_augmentation(ex, aug, rng);
}

// Marks exactly the units trained in `stage` as requiring gradients.
inline void configure_trainable(const NetworkParams& params, const StageSpec& stage) {
  for (std::size_t u = 0; u < params.units.size(); ++u) {
    params.set_unit_trainable(u, stage.trains(u + 1));
  }
}

// One optimizer step on the mean modified-Chamfer loss over `batch`. Frozen
// and inactive units are neither differentiated nor updated.
inline double train_step(NetworkParams& params,
                         std::span<const TrainingExample* const> batch,
                         const StageSpec& stage, const TrainConfig& cfg,
                         std::mt19937_64& rng, AdamState& adam,
                         std::size_t step_index = 0) {
  if (batch.empty()) throw ValidationError("train_step needs a non-empty batch");
  configure_trainable(params, stage);
  std::vector<Tensor> tensors = params.tensors();
  for (Tensor& t : tensors) t.zero_grad();

  Tape tape;
  Tensor total;
  for (const TrainingExample* ex : batch) {
    TrainingExample aug = augment_example(*ex, cfg.augment, rng);
    TrainForward fw = cascade_train_forward(tape, aug.input,
                                            aug.reference(stage.target), params,
                                            stage.target, cfg.patch_size, rng);
    Tensor loss = modified_chamfer(tape, fw.prediction, fw.reference, cfg.loss);
    if (cfg.loss_all_levels) {
      for (std::size_t l = 0; l + 1 < fw.levels.size(); ++l) {
        loss = add(tape, loss,
                   modified_chamfer(tape, fw.levels[l].prediction,
                                    fw.levels[l].reference, cfg.loss));
      }
    }
    if (!std::isfinite(loss.item())) {
      std::string query;
      for (double v : fw.levels.back().patches.query_point) {
        query += (query.empty() ? "" : ",") + format_double(v);
      }
      throw NumericError("non-finite loss at stage " + std::to_string(stage.index) +
                         " step " + std::to_string(step_index) +
                         " (patch query " + query + ")");
    }
    total = total.defined() ? add(tape, total, loss) : loss;
  }
  Tensor mean = scale(tape, total, 1.0 / static_cast<double>(batch.size()));
  tape.backward(mean);

  const std::vector<std::size_t> owner = params.owners();
  std::unique_ptr<bool[]> active(new bool[tensors.size()]);
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    active[i] = stage.trains(owner[i] + 1);
    if (!active[i]) tensors[i].zero_grad();
  }
  adam.config.learning_rate = cfg.learning_rate;
  adam_step(tensors, adam, std::span<const bool>(active.get(), tensors.size()));
  return mean.item();
}

struct TrainLogEntry {
  std::size_t stage = 0;
  std::size_t step = 0;
  std::size_t target_level = 0;
  double loss = 0.0;
};

struct StageSummary {
  std::size_t stage = 0;
  std::size_t target_level = 0;
  std::size_t steps = 0;
  double mean_loss = 0.0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  std::vector<StageSummary> stages;
};

inline std::string log_csv_header() { return "stage,step,target_level,loss\n"; }

inline std::string log_csv_row(const TrainLogEntry& e) {
  return std::to_string(e.stage) + "," + std::to_string(e.step) + "," +
         std::to_string(e.target_level) + "," + format_double(e.loss) + "\n";
}

inline std::filesystem::path stage_checkpoint_path(const std::filesystem::path& dir,
                                                   std::size_t stage) {
  return dir / ("ckpt_stage" + std::to_string(stage) + ".bin");
}

struct TrainOptions {
  // Where checkpoints and train_log.csv go; empty disables file output.
  std::filesystem::path out_dir;
  // Continue from the latest checkpoint in out_dir, if any.
  bool resume = false;
  // Stop after this many stages in total (0 = run the whole schedule).
  std::size_t stop_after_stage = 0;
  // Called after every step; for progress reporting.
  std::function<void(const TrainLogEntry&)> on_step;
};

// Runs the 2L-1 stage schedule over `dataset`. Each stage draws its batches
// from a per-stage RNG seeded by (seed, stage), cycling the dataset in an
// order reshuffled every epoch, so a resumed run replays exactly.
inline std::pair<NetworkParams, TrainLog> progressive_train(
    const std::vector<TrainingExample>& dataset, const TrainConfig& cfg,
    NetConfig net_cfg, const TrainOptions& options = {}) {
  cfg.validate();
  if (dataset.empty()) throw ValidationError("training dataset is empty");
  for (const TrainingExample& ex : dataset) {
    if (ex.levels() < cfg.levels) {
      throw ValidationError("dataset example lacks reference level " +
                            std::to_string(cfg.levels));
    }
  }
  net_cfg.levels = cfg.levels;
  net_cfg.dim = dataset.front().input.dim();
  NetworkParams params = init_network(net_cfg, cfg.seed);
  AdamState adam;
  adam.config.learning_rate = cfg.learning_rate;
  std::size_t first_stage = 1;

  const auto schedule = build_schedule(cfg.levels);
  const bool files = !options.out_dir.empty();
  const auto log_path = options.out_dir / "train_log.csv";
  if (files) std::filesystem::create_directories(options.out_dir);
  if (files && options.resume) {
    for (std::size_t s = schedule.size(); s >= 1; --s) {
      const auto path = stage_checkpoint_path(options.out_dir, s);
      if (!std::filesystem::exists(path)) continue;
      Checkpoint ck = load_checkpoint(path);
      if (ck.params.config.levels != cfg.levels) {
        throw ValidationError("checkpoint was trained for a different level count");
      }
      params = std::move(ck.params);
      if (ck.adam) adam = std::move(*ck.adam);
      first_stage = ck.stage + 1;
      break;
    }
  }
  if (files && first_stage == 1) {
    std::ofstream(log_path, std::ios::trunc) << log_csv_header();
  }

  TrainLog log;
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t stage_no = first_stage; stage_no <= schedule.size(); ++stage_no) {
    if (options.stop_after_stage && stage_no > options.stop_after_stage) break;
    const StageSpec& stage = schedule[stage_no - 1];
    std::seed_seq seq{static_cast<std::uint64_t>(cfg.seed), std::uint64_t{stage_no}};
    std::mt19937_64 rng(seq);
    std::size_t cursor = order.size();
    StageSummary summary{stage_no, stage.target, 0, 0.0};
    std::ofstream csv;
    if (files) csv.open(log_path, std::ios::app);
    for (std::size_t step = 0; step < cfg.steps_per_stage; ++step) {
      std::vector<const TrainingExample*> batch;
      for (std::size_t b = 0; b < cfg.batch_size; ++b) {
        if (cursor == order.size()) {
          std::iota(order.begin(), order.end(), std::size_t{0});
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        batch.push_back(&dataset[order[cursor++]]);
      }
      const double loss = train_step(params, batch, stage, cfg, rng, adam, step);
      TrainLogEntry entry{stage_no, step, stage.target, loss};
      log.entries.push_back(entry);
      if (files) csv << log_csv_row(entry);
      if (options.on_step) options.on_step(entry);
      summary.steps++;
      summary.mean_loss += loss;
    }
    if (summary.steps) summary.mean_loss /= static_cast<double>(summary.steps);
    log.stages.push_back(summary);
    if (files) {
      csv.close();
      save_checkpoint(stage_checkpoint_path(options.out_dir, stage_no), params,
                      stage_no, &adam);
    }
  }
  for (std::size_t u = 0; u < params.units.size(); ++u) {
    params.set_unit_trainable(u, true);
  }
  return {std::move(params), std::move(log)};
}

}  // namespace ppu
