// ppu_acceptance: runs the acceptance checks and prints one PASS/FAIL line per
// criterion. Exit code 0 only when every criterion passes.
//
//   ppu_acceptance --work DIR [--only 1,2,...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "oracles.hpp"
#include "ppu/ppu.hpp"

namespace fs = std::filesystem;
using namespace ppu;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) {
  std::ostringstream s;
  s.precision(6);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

NetConfig small_net(std::size_t levels) {
  NetConfig c;
  c.levels = levels;
  c.dim = 2;
  c.compress_width = 6;
  c.growth = 3;
  c.blocks = 2;
  c.knn_k = 4;
  c.interp_k = 3;
  c.expansion_widths = {10, 5};
  return c;
}

Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
  Tensor t = oracle::random_tensor(std::move(shape), rng);
  for (double& v : t.data()) v = v < 0 ? v - 0.1 : v + 0.1;
  return t;
}

// ---------------------------------------------------------------- 1

Verdict gradient_integrity() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  Tensor a = away_from_zero({4, 3}, rng), b = away_from_zero({3, 5}, rng);
  Tensor bias = away_from_zero({5}, rng), c = away_from_zero({4, 3}, rng);
  Tensor g3 = away_from_zero({3, 4, 2}, rng), f = away_from_zero({5, 3}, rng);
  Tensor wc = away_from_zero({4, 2}, rng), bc = away_from_zero({2}, rng);
  Tensor feats = oracle::random_tensor({12, 3}, rng);
  const PointSet src = oracle::random_points(12, 2, rng), qp = oracle::random_points(6, 2, rng);
  const Tensor qf = oracle::random_tensor({6, 3}, rng).detach();
  const PointSet target = oracle::random_points(15, 2, rng);
  Tensor pred = oracle::random_tensor({10, 2}, rng);
  const NeighborIndex idx{4, 2, {0, 1, 1, 1, 3, 2, 0, 3}};
  const Tensor f_const = f.detach();
  // Kernel widths are constants of the op, so they are fixed before perturbing.
  const BilateralWidths widths = bilateral_widths(src, feats);

  auto project = [](Tape& t, const Tensor& y) {
    std::vector<double> w(y.cols());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.17 * static_cast<double>(i);
    return sum(t, linear(t, y, Tensor::from({y.cols(), 1}, std::move(w)), Tensor()));
  };
  struct Case {
    const char* name;
    std::vector<Tensor> inputs;
    LossBuilder fn;
  };
  std::vector<Case> cases{
      {"matmul", {a, b}, [&](Tape& t, const std::vector<Tensor>& in) {
         return project(t, relu(t, matmul(t, in[0], in[1])));
       }},
      {"linear", {a, b, bias}, [&](Tape& t, const std::vector<Tensor>& in) {
         return project(t, leaky_relu(t, linear(t, in[0], in[1], in[2])));
       }},
      {"add", {a, c}, [&](Tape& t, const std::vector<Tensor>& in) {
         return project(t, relu(t, add(t, in[0], in[1])));
       }},
      {"scale_affine", {a}, [&](Tape& t, const std::vector<Tensor>& in) {
         const std::vector<double> off{0.1, -0.2, 0.3};
         return project(t, relu(t, affine(t, scale(t, in[0], 1.5), 0.7, off)));
       }},
      {"concat", {a, c}, [&](Tape& t, const std::vector<Tensor>& in) {
         return project(t, concat_columns(t, {in[0], in[1]}));
       }},
      {"gather_rows", {a}, [&](Tape& t, const std::vector<Tensor>& in) {
         return project(t, max_over_group(t, gather_rows(t, in[0], idx)));
       }},
      {"select_rows", {a}, [&](Tape& t, const std::vector<Tensor>& in) {
         return project(t, select_rows(t, in[0], {2, 0, 2}));
       }},
      {"max_over_group", {g3}, [&](Tape& t, const std::vector<Tensor>& in) {
         return project(t, max_over_group(t, in[0]));
       }},
      {"gather_max", {a}, [&](Tape& t, const std::vector<Tensor>& in) {
         return project(t, gather_max(t, in[0], idx));
       }},
      {"code_linear", {f_const, wc, bc}, [&](Tape& t, const std::vector<Tensor>& in) {
         return project(t, relu(t, code_linear(t, in[0], in[1], in[2])));
       }},
      {"bilateral_interpolate", {feats}, [&](Tape& t, const std::vector<Tensor>& in) {
         return project(t, bilateral_interpolate(t, qp, qf, src, in[0], 4, widths));
       }},
      {"modified_chamfer", {pred}, [&](Tape& t, const std::vector<Tensor>& in) {
         return modified_chamfer(t, in[0], target, LossConfig{});
       }},
  };
  double worst_op = 0.0;
  std::string worst_name;
  for (Case& k : cases) {
    const double err = finite_difference_check(k.fn, k.inputs, 1e-6);
    if (err > worst_op) {
      worst_op = err;
      worst_name = k.name;
    }
  }

  NetConfig cfg = small_net(1);
  NetworkParams p = init_network(cfg, 102);
  std::mt19937_64 head_rng(103);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& unit : p.units) {
    for (double& v : unit.expansion.back().weight.data()) v = u(head_rng);
    for (double& v : unit.expansion.back().bias.data()) v = u(head_rng);
  }
  const ParametricCurve curve = generate_curve(CurveKind::Fourier, 104);
  const PointSet in = sample_curve_uniform(curve, 16), ref = sample_curve_uniform(curve, 32);
  const double e2e = finite_difference_check(
      [&](Tape& tape, const std::vector<Tensor>&) {
        std::mt19937_64 r(105);
        TrainForward fw = cascade_train_forward(tape, in, ref, p, 1, 16, r);
        return modified_chamfer(tape, fw.prediction, fw.reference, LossConfig{});
      },
      p.tensors(), 1e-6);
  const double secs = seconds_since(t0);
  return {worst_op < 1e-4 && e2e < 1e-3 && secs < 60.0,
          std::to_string(cases.size()) + " ops, worst " + num(worst_op) + " (" + worst_name +
              "); end-to-end " + num(e2e) + " over " + std::to_string(p.parameter_count()) +
              " params; " + num(secs) + " s"};
}

// ---------------------------------------------------------------- 2

Verdict oracle_equivalence() {
  std::mt19937_64 rng(201);
  std::size_t mismatches = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    std::uniform_int_distribution<std::size_t> nd(2, 200);
    const std::size_t d = 2 + trial % 2;
    const PointSet p = oracle::random_points(nd(rng), d, rng);
    const PointSet q = oracle::random_points(nd(rng), d, rng);
    const std::size_t k = 1 + static_cast<std::size_t>(trial) % std::min<std::size_t>(q.size(), 16);
    const NeighborIndex nn = knn(p, q, k);
    const auto want = oracle::knn(p, q, k);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto row = nn.row(i);
      if (!std::equal(row.begin(), row.end(), want[i].begin())) ++mismatches;
    }
    const std::size_t m = 1 + static_cast<std::size_t>(trial) % p.size();
    const std::size_t start = static_cast<std::size_t>(trial) % p.size();
    if (farthest_point_sample(p, m, start) != oracle::fps(p, m, start)) ++mismatches;
    const double delta = 0.01 * (1 + trial % 7);
    worst = std::max({worst, std::abs(chamfer(p, q) - oracle::chamfer(p, q)),
                      std::abs(modified_chamfer_value(p, q, delta) -
                               oracle::modified_chamfer(p, q, delta)),
                      std::abs(hausdorff(p, q) - oracle::hausdorff(p, q))});
  }
  return {mismatches == 0 && worst <= 1e-12,
          "200 instances: " + std::to_string(mismatches) +
              " index mismatches, worst value error " + num(worst)};
}

// ---------------------------------------------------------------- 3

Verdict architecture() {
  NetConfig c;
  const NetworkParams p = init_network(c, 0);
  std::mt19937_64 rng(301);
  Tape tape(false);
  const Tensor coords = oracle::random_points(50, 3, rng).to_tensor(false);
  const std::size_t width = extract_features(tape, coords, p.units[0], p.config).cols();
  const auto count = static_cast<double>(p.parameter_count());
  const bool ok = c.feature_width() == 216 && width == 216 && p.units.size() == 4 &&
                  std::abs(count - 304000.0) <= 30400.0;
  return {ok, "feature width " + std::to_string(width) + ", parameters " +
                  std::to_string(p.parameter_count()) + " (" +
                  num(100.0 * (count - 304000.0) / 304000.0) + "% vs 304K)"};
}

// ---------------------------------------------------------------- 4

Verdict exact_ratios() {
  NetConfig c;
  c.dim = 2;
  const NetworkParams p = init_network(c, 401);
  const PointSet in = sample_curve_uniform(generate_curve(CurveKind::Fourier, 402), 625);
  bool ok = true;
  std::string counts;
  for (std::size_t l = 1; l <= 4; ++l) {
    const std::size_t n = cascade_infer(in, p, l, 50).size();
    ok = ok && n == (625u << l);
    counts += (l > 1 ? "/" : "") + std::to_string(n);
  }
  std::size_t checked = 0, wrong = 0;
  const NetworkParams small = init_network(small_net(4), 403);
  const ParametricCurve curve = generate_curve(CurveKind::Circle, 404);
  const std::size_t N = 16;
  const PointSet src = sample_curve_uniform(curve, 64), full = sample_curve_uniform(curve, 1024);
  for (std::size_t target = 1; target <= 4; ++target) {
    std::mt19937_64 rng(405 + target);
    Tape tape(false);
    const TrainForward f = cascade_train_forward(tape, src, full, small, target, N, rng);
    for (std::size_t l = 1; l <= target; ++l) {
      const std::size_t k = (std::size_t{1} << (target - l + 1)) * N;
      ++checked;
      if (reference_patch_size(N, target, l) != k || f.levels[l - 1].reference.size() != k ||
          f.levels[l - 1].prediction.rows() != 2 * N) {
        ++wrong;
      }
    }
  }
  return {ok && wrong == 0, "625 -> " + counts + "; reference patch sizes " +
                                std::to_string(checked - wrong) + "/" +
                                std::to_string(checked) + " correct"};
}

// ---------------------------------------------------------------- 5

struct Row {
  std::size_t target;
  std::vector<std::size_t> frozen;
};

Verdict schedule() {
  const std::vector<std::vector<Row>> tables = {
      {{1, {}}},
      {{1, {}}, {2, {1}}, {2, {}}},
      {{1, {}}, {2, {1}}, {2, {}}, {3, {1, 2}}, {3, {}}},
      {{1, {}}, {2, {1}}, {2, {}}, {3, {1, 2}}, {3, {}}, {4, {1, 2, 3}}, {4, {}}},
      {{1, {}}, {2, {1}}, {2, {}}, {3, {1, 2}}, {3, {}}, {4, {1, 2, 3}}, {4, {}},
       {5, {1, 2, 3, 4}}, {5, {}}},
      {{1, {}}, {2, {1}}, {2, {}}, {3, {1, 2}}, {3, {}}, {4, {1, 2, 3}}, {4, {}},
       {5, {1, 2, 3, 4}}, {5, {}}, {6, {1, 2, 3, 4, 5}}, {6, {}}},
  };
  bool tables_ok = true;
  for (std::size_t L = 1; L <= 6; ++L) {
    const auto s = build_schedule(L);
    tables_ok = tables_ok && s.size() == 2 * L - 1;
    for (std::size_t i = 0; tables_ok && i < s.size(); ++i) {
      tables_ok = s[i].index == i + 1 && s[i].target == tables[L - 1][i].target &&
                  s[i].frozen == tables[L - 1][i].frozen;
    }
  }

  // Train every stage of L = 3 and compare untouched tensors bit for bit.
  std::vector<TrainingExample> data;
  for (std::size_t i = 0; i < 3; ++i) {
    data.push_back(build_example(generate_curve(dataset_curve_kind(i), 500 + i), 32, 3));
  }
  std::vector<const TrainingExample*> batch{&data[0], &data[1], &data[2]};
  NetworkParams p = init_network(small_net(3), 501);
  TrainConfig cfg;
  cfg.levels = 3;
  cfg.patch_size = 16;
  cfg.learning_rate = 0.01;
  std::mt19937_64 rng(502);
  AdamState adam;
  const auto owners = p.owners();
  double drift = 0.0;
  bool trained_moved = true;
  for (const StageSpec& stage : build_schedule(3)) {
    std::vector<std::vector<double>> before;
    for (const Tensor& t : p.tensors()) before.emplace_back(t.data().begin(), t.data().end());
    for (std::size_t step = 0; step < 3; ++step) train_step(p, batch, stage, cfg, rng, adam, step);
    const auto after = p.tensors();
    std::vector<double> moved(3, 0.0);
    for (std::size_t i = 0; i < after.size(); ++i) {
      double d = 0.0;
      for (std::size_t j = 0; j < before[i].size(); ++j) {
        d += std::abs(after[i].data()[j] - before[i][j]);
      }
      if (stage.trains(owners[i] + 1)) {
        moved[owners[i]] += d;
      } else {
        drift += d;
      }
    }
    for (std::size_t u = 1; u <= 3; ++u) {
      if (stage.trains(u) && moved[u - 1] == 0.0) trained_moved = false;
    }
  }
  return {tables_ok && drift == 0.0 && trained_moved,
          std::string("tables L=1..6 ") + (tables_ok ? "match" : "differ") +
              "; frozen drift " + num(drift) + "; trained units " +
              (trained_moved ? "moved" : "did not move")};
}

// ---------------------------------------------------------------- 6

struct DeskRun {
  NetworkParams params;
  std::vector<TrainingExample> test;
  std::vector<std::size_t> test_ids;
};

Verdict desk_scale(std::optional<DeskRun>& run) {
  const auto t0 = Clock::now();
  std::vector<TrainingExample> train, test;
  std::vector<std::size_t> test_ids;
  DatasetOptions opt;
  for (std::size_t i = 0; i < opt.curves; ++i) {
    TrainingExample ex =
        build_example(generate_curve(dataset_curve_kind(i), opt.seed + i), opt.n0, 2);
    if (i % opt.test_every == opt.test_every - 1) {
      test.push_back(std::move(ex));
      test_ids.push_back(i);
    } else {
      train.push_back(std::move(ex));
    }
  }
  TrainConfig tc;
  tc.levels = 2;
  tc.steps_per_stage = 500;
  tc.seed = 0;
  auto [params, log] = progressive_train(train, tc, NetConfig{});
  const double train_secs = seconds_since(t0);
  const NetworkParams init = init_network(params.config, tc.seed);
  double base = 0.0, trained = 0.0, cd_in = 0.0, cd_out = 0.0;
  for (const TrainingExample& ex : test) {
    const PointSet z = cascade_infer(ex.input, init, 2, tc.patch_size);
    const PointSet y = cascade_infer(ex.input, params, 2, tc.patch_size);
    base += modified_chamfer(z, ex.reference(2), tc.loss);
    trained += modified_chamfer(y, ex.reference(2), tc.loss);
    cd_in += chamfer(ex.input, ex.reference(2));
    cd_out += chamfer(y, ex.reference(2));
  }
  const double n = static_cast<double>(test.size());
  base /= n;
  trained /= n;
  cd_in /= n;
  cd_out /= n;
  const double secs = seconds_since(t0);
  const double improvement = 1.0 - trained / base;
  run = DeskRun{std::move(params), std::move(test), std::move(test_ids)};
  return {improvement >= 0.5 && cd_out < cd_in && secs < 900.0,
          std::to_string(train.size()) + " train / " + std::to_string(run->test.size()) +
              " test; modified chamfer " + num(base) + " -> " + num(trained) + " (" +
              num(100.0 * improvement) + "% better); chamfer input " + num(cd_in) +
              " output " + num(cd_out) + "; " + num(train_secs) + " s training, " +
              num(secs) + " s total"};
}

// ---------------------------------------------------------------- 7

Verdict zero_residual() {
  double worst = 0.0;
  std::size_t runs = 0;
  for (std::size_t dim : {2u, 3u}) {
    NetConfig c;
    c.dim = dim;
    c.levels = 2;
    const NetworkParams p = init_network(c, 700 + dim);
    std::mt19937_64 rng(710 + dim);
    const PointSet in = dim == 2 ? sample_curve_uniform(generate_curve(CurveKind::RoundedPolygon, 720), 120)
                                 : oracle::random_points(120, 3, rng);
    for (std::size_t l = 1; l <= 2; ++l) {
      const PointSet out = cascade_infer(in, p, l, 50);
      for (double d : oracle::nn_sq(out, in)) worst = std::max(worst, std::sqrt(d));
      ++runs;
    }
  }
  return {worst == 0.0, std::to_string(runs) + " fresh cascades, max distance to input " +
                            num(worst)};
}

// ---------------------------------------------------------------- 8

Verdict robustness(const std::optional<DeskRun>& run, const fs::path& work) {
  if (!run) return {false, "needs the criterion 6 model"};
  SweepSettings s;
  s.levels = 2;
  std::vector<SweepCase> noise_cases, drop_cases;
  for (std::size_t i = 0; i < run->test.size(); ++i) {
    const TrainingExample& ex = run->test[i];
    noise_cases.push_back({ex.input, ex.reference(2), ex.curve});
    // Denser inputs keep 50% drops above the feature neighborhood size.
    const ParametricCurve curve = generate_curve(dataset_curve_kind(run->test_ids[i]),
                                                 DatasetOptions{}.seed + run->test_ids[i]);
    const TrainingExample dense = build_example(curve, 100, 2);
    drop_cases.push_back({dense.input, dense.reference(2), dense.curve});
  }
  auto rows = run_sweep(SweepKind::Noise, default_noise_levels(), noise_cases, run->params, s);
  const auto drops = run_sweep(SweepKind::Drop, default_drop_levels(), drop_cases, run->params, s);
  std::vector<double> levels, cds;
  for (const SweepRow& r : rows) {
    levels.push_back(r.level);
    cds.push_back(r.chamfer);
  }
  rows.insert(rows.end(), drops.begin(), drops.end());
  bool finite = true;
  for (const SweepRow& r : rows) {
    finite = finite && std::isfinite(r.chamfer) && std::isfinite(r.hausdorff) &&
             r.point_to_curve && std::isfinite(*r.point_to_curve);
  }
  std::ofstream(work / "robustness.csv", std::ios::binary) << sweep_csv(rows);
  const double rho = spearman(levels, cds);
  std::string drop_cd;
  for (const SweepRow& r : drops) drop_cd += (drop_cd.empty() ? "" : "/") + num(r.chamfer);
  return {finite && rho > 0.8,
          std::to_string(rows.size()) + " settings " + (finite ? "finite" : "NOT finite") +
              "; noise Spearman " + num(rho) + "; noise CD " + num(cds.front()) + " -> " +
              num(cds.back()) + "; drop CD " + drop_cd};
}

// ---------------------------------------------------------------- 9

Verdict determinism(const fs::path& work) {
  auto once = [&](const std::string& tag) {
    const fs::path dir = work / ("determinism_" + tag);
    fs::remove_all(dir);
    DatasetOptions d;
    d.curves = 5;
    d.levels = 2;
    generate_dataset(dir / "data", d);
    const auto data = load_dataset(dir / "data" / "manifest.json", "train", 2);
    TrainConfig tc;
    tc.levels = 2;
    tc.steps_per_stage = 4;
    tc.batch_size = 4;
    tc.seed = 9;
    TrainOptions opt;
    opt.out_dir = dir / "run";
    auto [params, log] = progressive_train(data, tc, NetConfig{}, opt);
    write_points(dir / "out.xyz", cascade_infer(data.front().input, params, 2, 50));
    return dir;
  };
  const fs::path a = once("a"), b = once("b");
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) ++differ;
  }
  const bool has_all = fs::exists(a / "run" / "ckpt_stage3.bin") &&
                       fs::exists(a / "run" / "train_log.csv") && fs::exists(a / "out.xyz");
  return {has_all && differ == 0, std::to_string(files) +
                                      " files (dataset, checkpoints, log, output) compared, " +
                                      std::to_string(differ) + " differ"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work", work, "Scratch directory")->capture_default_str();
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work);
  const std::set<int> selected(only.begin(), only.end());
  auto wanted = [&](int id) { return selected.empty() || selected.count(id) > 0; };

  std::optional<DeskRun> desk;
  const std::vector<std::pair<int, std::function<Verdict()>>> criteria{
      {1, gradient_integrity},
      {2, oracle_equivalence},
      {3, architecture},
      {4, exact_ratios},
      {5, schedule},
      {6, [&] { return desk_scale(desk); }},
      {7, zero_residual},
      {8, [&] { return robustness(desk, work); }},
      {9, [&] { return determinism(work); }},
  };
  bool all = true;
  for (const auto& [id, check] : criteria) {
    if (!wanted(id)) continue;
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    all = all && v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << v.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
