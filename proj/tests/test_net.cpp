#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "ppu/adam.hpp"
#include "ppu/checkpoint.hpp"
#include "ppu/gradcheck.hpp"
#include "ppu/loss.hpp"
#include "ppu/net.hpp"

using namespace ppu;

namespace {

NetConfig small_config(std::size_t levels = 2) {
  NetConfig c;
  c.levels = levels;
  c.dim = 2;
  c.compress_width = 6;
  c.growth = 3;
  c.blocks = 2;
  c.layers_per_block = 2;
  c.knn_k = 4;
  c.interp_k = 3;
  c.expansion_widths = {10, 5};
  return c;
}

// Replaces every residual head with small random weights.
void randomize_heads(NetworkParams& p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  for (auto& unit : p.units) {
    for (double& v : unit.expansion.back().weight.data()) v = u(rng);
    for (double& v : unit.expansion.back().bias.data()) v = u(rng);
  }
}

std::vector<double> vals(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor permute_rows(const Tensor& t, const std::vector<std::size_t>& perm) {
  Tape tape(false);
  return select_rows(tape, t, perm);
}

// Parameter count from the layer arithmetic, independent of init_network.
std::size_t expected_parameters(const NetConfig& c) {
  auto dense = [](std::size_t in, std::size_t out) { return in * out + out; };
  std::size_t per_unit = dense(c.dim, c.compress_width);
  const std::size_t block_out = c.compress_width + c.layers_per_block * c.growth;
  for (std::size_t b = 0; b < c.blocks; ++b) {
    per_unit += dense(c.dim + c.compress_width + b * block_out, c.compress_width);
    for (std::size_t l = 0; l < c.layers_per_block; ++l)
      per_unit += dense(c.compress_width + l * c.growth, c.growth);
  }
  std::size_t in = c.compress_width + c.blocks * block_out + 1;
  for (std::size_t w : c.expansion_widths) {
    per_unit += dense(in, w);
    in = w;
  }
  per_unit += dense(in, c.dim);
  return c.levels * per_unit;
}

}  // namespace

// ---------------------------------------------------------------- widths

TEST(Widths, DefaultFeatureWidthIs216) {
  NetConfig c;
  EXPECT_EQ(c.block_output_width(), 48u);
  EXPECT_EQ(c.feature_width(), 216u);
  EXPECT_EQ(c.dense_layer_input_width(0), 24u);
  EXPECT_EQ(c.dense_layer_input_width(1), 36u);
}

TEST(Widths, DefaultParameterCountNear304K) {
  NetConfig c;
  NetworkParams p = init_network(c, 0);
  EXPECT_EQ(p.parameter_count(), expected_parameters(c));
  EXPECT_NEAR(static_cast<double>(p.parameter_count()), 304000.0, 30400.0);
}

TEST(Widths, SmallConfigParameterCount) {
  NetConfig c = small_config(3);
  EXPECT_EQ(init_network(c, 1).parameter_count(), expected_parameters(c));
}

TEST(Widths, ExtractedFeaturesHave216Columns) {
  NetConfig c;
  c.levels = 1;
  c.dim = 3;
  NetworkParams p = init_network(c, 2);
  std::mt19937_64 rng(3);
  Tape tape(false);
  Tensor x = oracle::random_tensor({40, 3}, rng, false);
  EXPECT_EQ(extract_features(tape, x, p.units[0], c).shape(), (Shape{40, 216}));
}

// ---------------------------------------------------------------- init

TEST(Init, SameSeedIsBitIdentical) {
  NetworkParams a = init_network(small_config(), 7), b = init_network(small_config(), 7);
  auto ta = a.tensors(), tb = b.tensors();
  ASSERT_EQ(ta.size(), tb.size());
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(vals(ta[i]), vals(tb[i]));
}

TEST(Init, DifferentSeedsDiffer) {
  NetworkParams a = init_network(small_config(), 7), b = init_network(small_config(), 8);
  EXPECT_NE(vals(a.units[0].initial.weight), vals(b.units[0].initial.weight));
}

TEST(Init, HeadIsZeroAndHiddenWeightsWithinGlorotBound) {
  NetworkParams p = init_network(small_config(), 9);
  for (const auto& nt : p.named()) {
    const bool head = nt.path.find("/expand" + std::to_string(small_config().expansion_widths.size())) !=
                      std::string::npos;
    if (head || nt.path.ends_with("/bias")) {
      for (double v : nt.tensor.data()) EXPECT_EQ(v, 0.0) << nt.path;
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(nt.tensor.rows() + nt.tensor.cols()));
    for (double v : nt.tensor.data()) EXPECT_LE(std::abs(v), bound) << nt.path;
  }
}

TEST(Init, InvalidConfigThrows) {
  NetConfig c = small_config();
  c.dim = 4;
  EXPECT_THROW(init_network(c, 0), ValidationError);
  c = small_config();
  c.levels = 0;
  EXPECT_THROW(init_network(c, 0), ValidationError);
}

// ---------------------------------------------------------------- dense block

TEST(DenseBlock, OutputWidthAndToggles) {
  std::mt19937_64 rng(10);
  for (bool fknn : {true, false})
    for (bool links : {true, false}) {
      NetConfig c = small_config();
      c.use_feature_knn = fknn;
      c.use_dense_links = links;
      NetworkParams p = init_network(c, 11);
      Tensor x = oracle::random_tensor({20, 2}, rng, false);
      Tape tape(false);
      Tensor f = extract_features(tape, x, p.units[0], c);
      EXPECT_EQ(f.shape(), (Shape{20, c.feature_width()}));
      EXPECT_EQ(c.feature_width(), 6u + 2 * 12u);
      Tensor in = oracle::random_tensor({20, c.block_input_width(0)}, rng, false);
      Tensor out = dense_block_forward(tape, in, PointSet::from_tensor(x), p.units[0].blocks[0], c);
      EXPECT_EQ(out.shape(), (Shape{20, 12}));
    }
}

TEST(DenseBlock, WholeSetGroupIsEquivariant) {
  NetConfig c = small_config();
  c.knn_k = 10;
  NetworkParams p = init_network(c, 12);
  std::mt19937_64 rng(13);
  Tensor in = oracle::random_tensor({10, c.block_input_width(0)}, rng, false);
  Tensor pts = oracle::random_tensor({10, 2}, rng, false);
  std::vector<std::size_t> perm(10);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tape tape(false);
  Tensor a = dense_block_forward(tape, in, PointSet::from_tensor(pts), p.units[0].blocks[0], c);
  Tensor b = dense_block_forward(tape, permute_rows(in, perm),
                                 PointSet::from_tensor(permute_rows(pts, perm)),
                                 p.units[0].blocks[0], c);
  EXPECT_EQ(vals(permute_rows(a, perm)), vals(b));
}

TEST(DenseBlock, DuplicatedRowsGiveIdenticalOutputs) {
  NetConfig c = small_config();
  NetworkParams p = init_network(c, 14);
  std::mt19937_64 rng(15);
  Tensor in = oracle::random_tensor({12, c.block_input_width(0)}, rng, false);
  auto d = in.data();
  std::copy(d.begin(), d.begin() + static_cast<long>(in.cols()),
            d.begin() + static_cast<long>(5 * in.cols()));
  Tensor pts = oracle::random_tensor({12, 2}, rng, false);
  Tape tape(false);
  Tensor out = dense_block_forward(tape, in, PointSet::from_tensor(pts), p.units[0].blocks[0], c);
  for (std::size_t j = 0; j < out.cols(); ++j) EXPECT_EQ(out.at(0, j), out.at(5, j));
}

TEST(DenseBlock, KLargerThanPointsThrows) {
  NetConfig c = small_config();
  NetworkParams p = init_network(c, 16);
  Tape tape(false);
  Tensor in = Tensor::zeros({3, c.block_input_width(0)});
  EXPECT_THROW(dense_block_forward(tape, in, PointSet::zeros(3, 2), p.units[0].blocks[0], c),
               ValidationError);
}

// ---------------------------------------------------------------- features

TEST(Features, PermutationEquivariance) {
  for (bool fknn : {true, false}) {
    NetConfig c;
    c.levels = 1;
    c.dim = 3;
    c.use_feature_knn = fknn;
    NetworkParams p = init_network(c, 17);
    std::mt19937_64 rng(18);
    Tensor x = oracle::random_tensor({60, 3}, rng, false);
    std::vector<std::size_t> perm(60);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tape tape(false);
    Tensor a = extract_features(tape, x, p.units[0], c);
    Tensor b = extract_features(tape, permute_rows(x, perm), p.units[0], c);
    EXPECT_EQ(vals(permute_rows(a, perm)), vals(b));
  }
}

TEST(Features, TooFewPointsThrows) {
  NetConfig c = small_config();
  NetworkParams p = init_network(c, 19);
  Tape tape(false);
  EXPECT_THROW(extract_features(tape, Tensor::zeros({3, 2}), p.units[0], c), ValidationError);
  EXPECT_THROW(extract_features(tape, Tensor::zeros({8, 3}), p.units[0], c), DimensionError);
}

TEST(Features, CoordinateGradientMatchesFiniteDifferences) {
  NetConfig c = small_config();
  NetworkParams p = init_network(c, 20);
  std::mt19937_64 rng(21);
  Tensor x = oracle::random_tensor({12, 2}, rng);
  const double err = finite_difference_check(
      [&](Tape& tape, const std::vector<Tensor>& in) {
        return sum(tape, extract_features(tape, in[0], p.units[0], c));
      },
      {x}, 1e-6);
  EXPECT_LT(err, 1e-4);
}

// ---------------------------------------------------------------- expansion

TEST(Expansion, ZeroHeadDuplicatesInput) {
  NetConfig c = small_config();
  NetworkParams p = init_network(c, 22);
  std::mt19937_64 rng(23);
  Tensor x = oracle::random_tensor({9, 2}, rng, false);
  Tape tape(false);
  Tensor f = extract_features(tape, x, p.units[0], c);
  Tensor out = expand_features(tape, x, f, p.units[0], c);
  ASSERT_EQ(out.shape(), (Shape{18, 2}));
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(out.at(i, j), x.at(i, j));
      EXPECT_EQ(out.at(9 + i, j), x.at(i, j));
    }
}

TEST(Expansion, SingleLayerHeadCodeDifference) {
  NetConfig c = small_config();
  c.expansion_widths = {};
  NetworkParams p = init_network(c, 24);
  std::mt19937_64 rng(25);
  Tensor w = oracle::random_tensor({c.feature_width() + 1, 2}, rng, false);
  Tensor b = oracle::random_tensor({2}, rng, false);
  p.units[0].expansion = {Dense{w, b}};
  Tensor f = oracle::random_tensor({7, c.feature_width()}, rng, false);
  Tape tape(false);
  Tensor r = expansion_residuals(tape, f, p.units[0], c);
  const std::size_t code = c.feature_width();
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_NEAR(r.at(7 + i, j) - r.at(i, j), 2.0 * w.at(code, j), 1e-13);
      // Direct evaluation of copy A: f.W[:C] - W[C] + b.
      double a = b.data()[j] - w.at(code, j);
      for (std::size_t k = 0; k < code; ++k) a += f.at(i, k) * w.at(k, j);
      EXPECT_NEAR(r.at(i, j), a, 1e-12);
    }
}

TEST(Expansion, CountIsAlwaysDouble) {
  NetConfig c = small_config();
  NetworkParams p = init_network(c, 26);
  randomize_heads(p, 27);
  std::mt19937_64 rng(28);
  for (std::size_t n : {4u, 5u, 17u, 33u}) {
    Tensor x = oracle::random_tensor({n, 2}, rng, false);
    Tape tape(false);
    Tensor f = extract_features(tape, x, p.units[0], c);
    EXPECT_EQ(expand_features(tape, x, f, p.units[0], c).rows(), 2 * n);
  }
}

TEST(Expansion, RowMismatchThrows) {
  NetConfig c = small_config();
  NetworkParams p = init_network(c, 29);
  Tape tape(false);
  EXPECT_THROW(expand_features(tape, Tensor::zeros({5, 2}), Tensor::zeros({4, c.feature_width()}),
                               p.units[0], c),
               DimensionError);
}

// ---------------------------------------------------------------- unit

TEST(Unit, ZeroContextFeaturesLeaveFeaturesUnchanged) {
  NetConfig c = small_config();
  NetworkParams p = init_network(c, 30);
  std::mt19937_64 rng(31);
  Tensor x = oracle::random_tensor({10, 2}, rng, false);
  PrevContext ctx{oracle::random_points(8, 2, rng), Tensor::zeros({8, c.feature_width()})};
  Tape tape(false);
  UnitOutput plain = unit_forward(tape, x, std::nullopt, p.units[1], c);
  UnitOutput with = unit_forward(tape, x, ctx, p.units[1], c);
  EXPECT_EQ(vals(plain.features), vals(with.features));
  EXPECT_EQ(with.points.rows(), 20u);
}

TEST(Unit, ContextChangesFeatures) {
  NetConfig c = small_config();
  NetworkParams p = init_network(c, 32);
  std::mt19937_64 rng(33);
  Tensor x = oracle::random_tensor({10, 2}, rng, false);
  PrevContext ctx{oracle::random_points(8, 2, rng),
                  oracle::random_tensor({8, c.feature_width()}, rng, false)};
  Tape tape(false);
  EXPECT_NE(vals(unit_forward(tape, x, std::nullopt, p.units[1], c).features),
            vals(unit_forward(tape, x, ctx, p.units[1], c).features));
}

// ---------------------------------------------------------------- cascade inference

TEST(CascadeInfer, SingleLevelWholeSet) {
  NetConfig c = small_config(1);
  NetworkParams p = init_network(c, 34);
  randomize_heads(p, 35);
  std::mt19937_64 rng(36);
  PointSet in = oracle::random_points(20, 2, rng);
  EXPECT_EQ(cascade_infer(in, p, 1, 20).size(), 40u);
}

TEST(CascadeInfer, CountsDoublePerLevel) {
  NetConfig c = small_config(3);
  NetworkParams p = init_network(c, 37);
  randomize_heads(p, 38);
  std::mt19937_64 rng(39);
  PointSet in = oracle::random_points(37, 2, rng);
  for (std::size_t l = 1; l <= 3; ++l) EXPECT_EQ(cascade_infer(in, p, l, 16).size(), 37u << l);
}

TEST(CascadeInfer, ZeroResidualOutputsCoincideWithInputs) {
  NetConfig c = small_config(3);
  NetworkParams p = init_network(c, 40);
  std::mt19937_64 rng(41);
  PointSet in = oracle::random_points(30, 2, rng);
  PointSet out = cascade_infer(in, p, 3, 16);
  ASSERT_EQ(out.size(), 240u);
  for (double d : oracle::nn_sq(out, in)) EXPECT_EQ(d, 0.0);
}

TEST(CascadeInfer, Deterministic) {
  NetConfig c = small_config(2);
  NetworkParams p = init_network(c, 42);
  randomize_heads(p, 43);
  std::mt19937_64 rng(44);
  PointSet in = oracle::random_points(30, 2, rng);
  EXPECT_EQ(cascade_infer(in, p, 2, 16), cascade_infer(in, p, 2, 16));
}

TEST(CascadeInfer, Errors) {
  NetConfig c = small_config(2);
  NetworkParams p = init_network(c, 45);
  std::mt19937_64 rng(46);
  EXPECT_THROW(cascade_infer(oracle::random_points(3, 2, rng), p, 1, 16), ValidationError);
  EXPECT_THROW(cascade_infer(oracle::random_points(20, 2, rng), p, 3, 16), ValidationError);
  EXPECT_THROW(cascade_infer(oracle::random_points(20, 3, rng), p, 1, 16), DimensionError);
}

// ---------------------------------------------------------------- cascade training

TEST(CascadeTrain, SingleLevelSizes) {
  NetConfig c = small_config(1);
  NetworkParams p = init_network(c, 47);
  std::mt19937_64 rng(48);
  PointSet in = oracle::random_points(16, 2, rng);
  PointSet ref = oracle::random_points(32, 2, rng);
  Tape tape;
  TrainForward f = cascade_train_forward(tape, in, ref, p, 1, 16, rng);
  EXPECT_EQ(f.prediction.rows(), 32u);
  EXPECT_EQ(f.reference.size(), 32u);
}

TEST(CascadeTrain, ReferenceSizesAlongTheChain) {
  NetConfig c = small_config(3);
  NetworkParams p = init_network(c, 49);
  std::mt19937_64 rng(50);
  PointSet in = oracle::random_points(50, 2, rng);
  PointSet ref = oracle::random_points(400, 2, rng);
  Tape tape;
  TrainForward f = cascade_train_forward(tape, in, ref, p, 3, 50, rng);
  ASSERT_EQ(f.levels.size(), 3u);
  EXPECT_EQ(f.levels[0].reference.size(), 400u);
  EXPECT_EQ(f.levels[1].reference.size(), 200u);
  EXPECT_EQ(f.levels[2].reference.size(), 100u);
  for (std::size_t l = 0; l < 3; ++l) EXPECT_EQ(f.levels[l].prediction.rows(), 100u);
}

TEST(CascadeTrain, FrozenUnitReceivesZeroGradient) {
  NetConfig c = small_config(2);
  NetworkParams p = init_network(c, 51);
  randomize_heads(p, 52);
  p.set_unit_trainable(0, false);
  std::mt19937_64 rng(53);
  PointSet in = oracle::random_points(16, 2, rng);
  PointSet ref = oracle::random_points(64, 2, rng);
  Tape tape;
  TrainForward f = cascade_train_forward(tape, in, ref, p, 2, 16, rng);
  Tensor loss = modified_chamfer(tape, f.prediction, f.reference, LossConfig{});
  tape.backward(loss);
  const auto owners = p.owners();
  const auto tensors = p.tensors();
  double unit1 = 0.0;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (owners[i] == 0) {
      EXPECT_FALSE(tensors[i].requires_grad());
      for (double g : tensors[i].grad()) EXPECT_EQ(g, 0.0);
    } else {
      for (double g : tensors[i].grad()) unit1 += std::abs(g);
    }
  }
  EXPECT_GT(unit1, 0.0);
}

TEST(CascadeTrain, InsufficientReferenceThrows) {
  NetConfig c = small_config(2);
  NetworkParams p = init_network(c, 54);
  std::mt19937_64 rng(55);
  Tape tape;
  EXPECT_THROW(cascade_train_forward(tape, oracle::random_points(16, 2, rng),
                                     oracle::random_points(40, 2, rng), p, 2, 16, rng),
               ValidationError);
}

TEST(CascadeTrain, EndToEndGradientMatchesFiniteDifferences) {
  NetConfig c = small_config(1);
  NetworkParams p = init_network(c, 56);
  randomize_heads(p, 57);
  std::mt19937_64 data_rng(58);
  PointSet in = oracle::random_points(16, 2, data_rng);
  PointSet ref = oracle::random_points(32, 2, data_rng);
  const double err = finite_difference_check(
      [&](Tape& tape, const std::vector<Tensor>&) {
        std::mt19937_64 rng(59);
        TrainForward f = cascade_train_forward(tape, in, ref, p, 1, 16, rng);
        return modified_chamfer(tape, f.prediction, f.reference, LossConfig{});
      },
      p.tensors(), 1e-6);
  EXPECT_LT(err, 1e-3);
}

// ---------------------------------------------------------------- checkpoints

TEST(Checkpoint, RoundTripPreservesEverything) {
  NetConfig c = small_config(2);
  c.activation = Activation::LeakyRelu;
  c.use_dense_links = false;
  c.interp_k = 2;
  NetworkParams p = init_network(c, 60);
  randomize_heads(p, 61);
  AdamState adam;
  adam.config.learning_rate = 0.02;
  auto tensors = p.tensors();
  for (Tensor& t : tensors) {
    for (double& g : t.grad()) g = 0.5;
  }
  adam_step(tensors, adam, {});
  const std::string bytes = serialize_checkpoint(p, 3, &adam);
  EXPECT_EQ(bytes.substr(0, 11), "3PU-CKPT-1\n");
  Checkpoint ck = deserialize_checkpoint(bytes);
  EXPECT_EQ(ck.stage, 3u);
  EXPECT_EQ(ck.params.config.activation, Activation::LeakyRelu);
  EXPECT_FALSE(ck.params.config.use_dense_links);
  EXPECT_EQ(ck.params.config.interp_k, 2u);
  EXPECT_EQ(ck.params.config.expansion_widths, c.expansion_widths);
  auto a = p.tensors(), b = ck.params.tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(vals(a[i]), vals(b[i]));
  ASSERT_TRUE(ck.adam.has_value());
  EXPECT_EQ(ck.adam->config.learning_rate, 0.02);
  ASSERT_EQ(ck.adam->slots.size(), adam.slots.size());
  for (std::size_t i = 0; i < adam.slots.size(); ++i) {
    EXPECT_EQ(ck.adam->slots[i].m, adam.slots[i].m);
    EXPECT_EQ(ck.adam->slots[i].v, adam.slots[i].v);
    EXPECT_EQ(ck.adam->slots[i].step, adam.slots[i].step);
  }
  EXPECT_EQ(serialize_checkpoint(ck.params, 3, &*ck.adam), bytes);
}

TEST(Checkpoint, CorruptInputsAreRejected) {
  NetworkParams p = init_network(small_config(1), 62);
  const std::string bytes = serialize_checkpoint(p, 1);
  EXPECT_THROW(deserialize_checkpoint("garbage"), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), FormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), FormatError);
  std::string bad_magic = bytes;
  bad_magic[0] = '4';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), FormatError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), FormatError);
}

TEST(Checkpoint, InferenceIdenticalAfterReload) {
  NetworkParams p = init_network(small_config(2), 63);
  randomize_heads(p, 64);
  Checkpoint ck = deserialize_checkpoint(serialize_checkpoint(p, 3));
  std::mt19937_64 rng(65);
  PointSet in = oracle::random_points(30, 2, rng);
  EXPECT_EQ(cascade_infer(in, p, 2, 16), cascade_infer(in, ck.params, 2, 16));
}
