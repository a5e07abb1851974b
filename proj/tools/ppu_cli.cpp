// ppu: command-line front end for dataset generation, training, upsampling
// and evaluation.
//
// Exit codes: 0 success, 1 invalid input or arguments, 2 runtime or numeric
// failure. Diagnostics go to stderr.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ppu/ppu.hpp"

namespace fs = std::filesystem;
using namespace ppu;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

const char* kPrecedence =
    "Settings come from built-in defaults, then the --config file (flat\n"
    "'key = value' lines named after the long options), then flags; later\n"
    "sources win. Unknown config keys are rejected.";

void add_config(CLI::App* cmd) {
  cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("--config", "Flat key = value settings file");
}

// CLI11 reads config files only for the top-level app, so a subcommand's
// --config file is spliced in as leading --key=value tokens. Flags given on
// the command line come later and win; unknown keys become unknown flags.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (args.empty() || path.empty()) return args;
  std::vector<std::string> injected;
  for (const CLI::ConfigItem& item : CLI::ConfigINI().from_file(path)) {
    if (!item.parents.empty()) {
      throw ValidationError("config sections are not supported: [" + item.parents.front() + "]");
    }
    std::string value;
    for (const std::string& v : item.inputs) value += (value.empty() ? "" : ",") + v;
    injected.push_back("--" + item.name + "=" + value);
  }
  args.insert(args.begin() + 1, injected.begin(), injected.end());
  return args;
}

struct GenDataArgs {
  DatasetOptions opt;
  std::string out;
};

void cmd_gen_data(const GenDataArgs& a) {
  generate_dataset(a.out, a.opt);
}

struct TrainArgs {
  std::string data;
  std::string out;
  TrainConfig train;
  NetConfig net;
  std::string activation = "relu";
  bool no_feature_knn = false;
  bool no_dense_links = false;
  bool no_rotate = false;
  bool resume = false;
  std::size_t max_stages = 0;
  bool progress = false;
};

void cmd_train(TrainArgs a) {
  fs::path manifest = a.data;
  if (fs::is_directory(manifest)) manifest /= "manifest.json";
  a.net.activation = parse_activation(a.activation);
  a.net.use_feature_knn = !a.no_feature_knn;
  a.net.use_dense_links = !a.no_dense_links;
  a.train.augment.rotate = !a.no_rotate;
  const auto dataset = load_dataset(manifest, "train", a.train.levels);
  if (dataset.empty()) throw ValidationError("dataset has no training examples");
  TrainOptions opt;
  opt.out_dir = a.out;
  opt.resume = a.resume;
  opt.stop_after_stage = a.max_stages;
  if (a.progress) {
    opt.on_step = [&](const TrainLogEntry& e) {
      if (e.step % 50 == 0 || e.step + 1 == a.train.steps_per_stage) {
        std::cerr << "stage " << e.stage << " step " << e.step << " loss "
                  << format_double(e.loss) << "\n";
      }
    };
  }
  progressive_train(dataset, a.train, a.net, opt);
}

struct UpsampleArgs {
  std::string ckpt;
  std::string in;
  std::string out;
  std::size_t levels = 0;
  std::size_t patch_size = 50;
  double coverage = 3.0;
};

std::size_t resolve_levels(std::size_t requested, const NetworkParams& params) {
  if (requested == 0) return params.units.size();
  if (requested > params.units.size()) {
    throw ValidationError("--levels " + std::to_string(requested) +
                          " exceeds the checkpoint's " +
                          std::to_string(params.units.size()) + " trained levels");
  }
  return requested;
}

void cmd_upsample(const UpsampleArgs& a) {
  const Checkpoint ck = load_checkpoint(a.ckpt);
  const std::size_t levels = resolve_levels(a.levels, ck.params);
  const PointSet input = read_points(a.in);
  const PointSet out = cascade_infer(input, ck.params, levels, a.patch_size, a.coverage);
  write_points(a.out, out);
  std::cout << out.size() << "\n";
}

struct EvalArgs {
  std::string pred;
  std::string ref;
  std::string curve;
  std::string out;
  std::string plot;
  std::optional<std::string> sweep_noise;
  std::optional<std::string> sweep_drop;
  std::string sweep_out;
  std::string ckpt;
  std::string in;
  std::size_t levels = 0;
  std::size_t patch_size = 50;
  double coverage = 3.0;
  std::uint64_t seed = 0;
};

void cmd_eval(const EvalArgs& a) {
  const bool sweeping = a.sweep_noise || a.sweep_drop;
  if (a.pred.empty() && !sweeping) {
    throw ValidationError("eval needs --pred or a sweep (--sweep-noise / --sweep-drop)");
  }
  if (a.ref.empty()) throw ValidationError("eval needs --ref");
  const PointSet reference = read_points(a.ref);
  std::optional<CurveSpec> spec;
  std::optional<ParametricCurve> curve;
  if (!a.curve.empty()) {
    spec = read_curve_spec(a.curve);
    curve.emplace(*spec);
  }
  if (!a.pred.empty()) {
    if (a.out.empty()) throw ValidationError("eval needs --out for the report");
    const PointSet pred = read_points(a.pred);
    if (pred.dim() != reference.dim()) {
      throw DimensionError("prediction is " + std::to_string(pred.dim()) +
                           "-D, reference is " + std::to_string(reference.dim()) + "-D");
    }
    const MetricsReport report =
        evaluate_metrics(pred, reference, curve ? &*curve : nullptr);
    std::FILE* f = std::fopen(a.out.c_str(), "wb");
    if (!f) throw Error("cannot write " + a.out);
    const std::string text = report.to_text();
    std::fwrite(text.data(), 1, text.size(), f);
    std::fclose(f);
    if (!a.plot.empty()) write_svg(a.plot, pred, report.nn_distances);
  } else if (!a.plot.empty()) {
    throw ValidationError("--plot needs --pred");
  }
  if (sweeping) {
    if (a.ckpt.empty() || a.in.empty()) {
      throw ValidationError("sweeps need --ckpt and --in");
    }
    if (a.sweep_out.empty()) throw ValidationError("sweeps need --sweep-out");
    const Checkpoint ck = load_checkpoint(a.ckpt);
    SweepSettings s;
    s.levels = resolve_levels(a.levels, ck.params);
    s.patch_size = a.patch_size;
    s.coverage = a.coverage;
    s.seed = a.seed;
    const std::vector<SweepCase> cases{{read_points(a.in), reference, spec}};
    std::vector<SweepRow> rows;
    auto run = [&](SweepKind kind, const std::optional<std::string>& text,
                   const std::vector<double>& defaults) {
      if (!text) return;
      const auto levels = text->empty() ? defaults : parse_levels(*text);
      const auto r = run_sweep(kind, levels, cases, ck.params, s);
      rows.insert(rows.end(), r.begin(), r.end());
    };
    run(SweepKind::Noise, a.sweep_noise, default_noise_levels());
    run(SweepKind::Drop, a.sweep_drop, default_drop_levels());
    std::FILE* f = std::fopen(a.sweep_out.c_str(), "wb");
    if (!f) throw Error("cannot write " + a.sweep_out);
    const std::string csv = sweep_csv(rows);
    std::fwrite(csv.data(), 1, csv.size(), f);
    std::fclose(f);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive patch-based point-set upsampling"};
  app.footer(kPrecedence);
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a synthetic contour dataset");
  add_config(g);
  g->add_option("--curves", gen.opt.curves, "Number of curves")->capture_default_str();
  g->add_option("--n0", gen.opt.n0, "Input points per example")->capture_default_str();
  g->add_option("--levels", gen.opt.levels, "Reference levels T1..TL")->capture_default_str();
  g->add_option("--seed", gen.opt.seed, "Seed of the first curve")->capture_default_str();
  g->add_option("--test-every", gen.opt.test_every,
                "Every n-th curve goes to the test split (0: none)")
      ->capture_default_str();
  g->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Progressive end-to-end training");
  add_config(t);
  t->add_option("--data", tr.data, "Dataset directory or manifest.json")->required();
  t->add_option("--out", tr.out, "Checkpoint and log directory")->required();
  t->add_option("--levels", tr.train.levels, "Cascade levels L")->capture_default_str();
  t->add_option("--patch-size", tr.train.patch_size, "Patch size N")->capture_default_str();
  t->add_option("--steps-per-stage", tr.train.steps_per_stage, "Optimizer steps per stage")
      ->capture_default_str();
  t->add_option("--batch", tr.train.batch_size, "Patches per step")->capture_default_str();
  t->add_option("--lr", tr.train.learning_rate, "Adam learning rate")->capture_default_str();
  t->add_option("--seed", tr.train.seed, "Seed for initialization and sampling")
      ->capture_default_str();
  t->add_option("--delta-multiplier", tr.train.loss.delta_multiplier,
                "Outlier threshold multiple of the squared mean NN spacing")
      ->capture_default_str();
  t->add_option("--noise", tr.train.augment.noise_fraction,
                "Augmentation noise std as a fraction of the bounding-box diagonal")
      ->capture_default_str();
  t->add_option("--scale-min", tr.train.augment.scale_min, "Augmentation scale minimum")
      ->capture_default_str();
  t->add_option("--scale-max", tr.train.augment.scale_max, "Augmentation scale maximum")
      ->capture_default_str();
  t->add_flag("--no-rotate", tr.no_rotate, "Disable rotation augmentation");
  t->add_flag("--loss-all-levels", tr.train.loss_all_levels,
              "Sum the loss over every cascade level");
  t->add_flag("--no-feature-knn", tr.no_feature_knn, "Group by coordinates, not features");
  t->add_flag("--no-dense-links", tr.no_dense_links, "Disable dense connections");
  t->add_option("--activation", tr.activation, "relu or leaky_relu")->capture_default_str();
  t->add_option("--knn", tr.net.knn_k, "Feature neighborhood size K")->capture_default_str();
  t->add_option("--interp-k", tr.net.interp_k, "Interpolation neighborhood size")
      ->capture_default_str();
  t->add_flag("--resume", tr.resume, "Continue from the latest checkpoint in --out");
  t->add_option("--max-stages", tr.max_stages, "Stop after this stage (0: all)")
      ->capture_default_str();
  t->add_flag("--progress", tr.progress, "Report losses on stderr");

  UpsampleArgs up;
  auto* u = app.add_subcommand("upsample", "Upsample a point file with a checkpoint");
  add_config(u);
  u->add_option("--ckpt", up.ckpt, "Checkpoint file")->required();
  u->add_option("--in", up.in, "Input point file")->required();
  u->add_option("--out", up.out, "Output point file")->required();
  u->add_option("--levels", up.levels, "Levels to apply (0: all trained)")->capture_default_str();
  u->add_option("--patch-size", up.patch_size, "Patch size N")->capture_default_str();
  u->add_option("--coverage", up.coverage, "Patch count factor")->capture_default_str();

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Metrics, plots and robustness sweeps");
  add_config(e);
  e->add_option("--pred", ev.pred, "Predicted point file");
  e->add_option("--ref", ev.ref, "Reference point file");
  e->add_option("--curve", ev.curve, "Ground-truth curve.json for point-to-curve");
  e->add_option("--out", ev.out, "Metrics report (key = value)");
  e->add_option("--plot", ev.plot, "SVG scatter of --pred colored by NN distance");
  e->add_option("--sweep-noise", ev.sweep_noise,
                "Noise levels, default 0,0.0025,0.005,0.01,0.015,0.02")
      ->expected(0, 1);
  e->add_option("--sweep-drop", ev.sweep_drop, "Drop fractions, default 0,0.1,...,0.5")
      ->expected(0, 1);
  e->add_option("--sweep-out", ev.sweep_out, "Sweep CSV output");
  e->add_option("--ckpt", ev.ckpt, "Checkpoint for sweeps");
  e->add_option("--in", ev.in, "Sweep input point file");
  e->add_option("--levels", ev.levels, "Levels to apply (0: all trained)")->capture_default_str();
  e->add_option("--patch-size", ev.patch_size, "Patch size N")->capture_default_str();
  e->add_option("--coverage", ev.coverage, "Patch count factor")->capture_default_str();
  e->add_option("--seed", ev.seed, "Perturbation seed")->capture_default_str();

  try {
    std::vector<std::string> args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(std::move(args));
  } catch (const ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitValidation;
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*g) cmd_gen_data(gen);
    if (*t) cmd_train(tr);
    if (*u) cmd_upsample(up);
    if (*e) cmd_eval(ev);
  } catch (const ValidationError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitValidation;
  } catch (const FormatError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitValidation;
  } catch (const DimensionError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
