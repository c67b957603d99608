#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <sstream>

#include "hsnet/data.hpp"
#include "hsnet/errors.hpp"
#include "hsnet/experiment.hpp"
#include "hsnet/train.hpp"
#include "support/random_graph.hpp"

using namespace hsnet;
using hsnet::testing::random_tensor;

TEST(Loss, MseOfIdenticalTensorsIsZero) {
  const Tensor o = Tensor::vector({0.3, -1, 2});
  const auto r = loss(o, o, LossKind::mse);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_EQ(r.grad.max_abs(), 0.0);
}

TEST(Loss, MseHandValues) {
  const auto r = loss(Tensor::vector({1, 2}), Tensor::vector({0, 0}), LossKind::mse);
  EXPECT_DOUBLE_EQ(r.value, 2.5);
  EXPECT_DOUBLE_EQ(r.grad[0], 1.0);
  EXPECT_DOUBLE_EQ(r.grad[1], 2.0);
}

TEST(Loss, CrossEntropyOfUniformLogitsIsLn2) {
  const Tensor logits = Tensor::vector({0, 0});
  EXPECT_NEAR(loss(logits, Tensor::vector({1, 0}), LossKind::softmax_cross_entropy).value,
              std::log(2.0), 1e-15);
  // Class-index targets give the same value.
  EXPECT_NEAR(loss(Tensor::matrix({{0, 0}}), Tensor::vector({0}), LossKind::softmax_cross_entropy)
                  .value,
              std::log(2.0), 1e-15);
}

TEST(Loss, ShapeMismatchIsDimensionError) {
  EXPECT_THROW(loss(Tensor({3}), Tensor({2}), LossKind::mse), DimensionError);
}

TEST(SgdStep, ZeroGradientLeavesParameter) {
  const Tensor p = Tensor::vector({1, -2});
  EXPECT_EQ(sgd_step_weights(p, Tensor({2}), 0.5), p);
}

TEST(SgdStep, Arithmetic) {
  EXPECT_DOUBLE_EQ(sgd_step_weights(Tensor::vector({1}), Tensor::vector({2}), 0.1)[0], 0.8);
}

TEST(SgdStep, GeometricDecayOnQuadratic) {
  // E = w^2: w_k = (1 - 2 eta)^k.
  const double eta = 0.4;
  Tensor w = Tensor::vector({1.0});
  double prev = 1.0;
  for (int k = 1; k <= 20; ++k) {
    w = sgd_step_weights(w, scaled(w, 2.0), eta);
    EXPECT_NEAR(w[0], std::pow(1 - 2 * eta, k), 1e-15);
    EXPECT_LT(std::abs(w[0]), prev);
    prev = std::abs(w[0]);
  }
}

TEST(SensitivityStep, ZeroLambdaMatchesSgdBitwise) {
  std::mt19937_64 rng(1);
  const Tensor s = random_tensor({9}, rng), g = random_tensor({9}, rng);
  for (auto mode : {SensitivityUpdate::proximal, SensitivityUpdate::subgradient}) {
    EXPECT_EQ(sensitivity_step(s, g, 0.3, 0.0, mode), sgd_step_weights(s, g, 0.3));
  }
}

TEST(SensitivityStep, ProximalSnapsSmallValuesToZero) {
  const Tensor s = sensitivity_step(Tensor::vector({0.05}), Tensor({1}), 0.1, 1.0,
                                    SensitivityUpdate::proximal);
  EXPECT_EQ(s[0], 0.0);
  EXPECT_FALSE(std::signbit(s[0]));
}

TEST(SensitivityStep, SubgradientRule) {
  EXPECT_DOUBLE_EQ(sensitivity_step(Tensor::vector({0.5}), Tensor({1}), 0.1, 1.0,
                                    SensitivityUpdate::subgradient)[0],
                   0.4);
  // sign(0) = 0: a zero sensitivity with zero gradient stays put.
  EXPECT_EQ(sensitivity_step(Tensor::vector({0.0}), Tensor({1}), 0.1, 1.0,
                             SensitivityUpdate::subgradient)[0],
            0.0);
}

TEST(SensitivityStep, ProximalExactnessProperty) {
  std::mt19937_64 rng(2);
  const double eta = 0.2, lambda = 0.7, tau = eta * lambda;
  for (int trial = 0; trial < 200; ++trial) {
    const Tensor s = random_tensor({16}, rng), g = random_tensor({16}, rng);
    const Tensor out = sensitivity_step(s, g, eta, lambda, SensitivityUpdate::proximal);
    for (std::size_t i = 0; i < 16; ++i) {
      const double z = s[i] - eta * g[i];
      if (std::abs(z) <= tau) {
        EXPECT_EQ(out[i], 0.0);
      } else {
        EXPECT_NEAR(out[i], z - std::copysign(tau, z), 1e-15);
      }
    }
  }
}

TEST(SensitivityStep, ProximalShrinksMonotonicallyWithoutGradient) {
  Tensor s = Tensor::vector({1.3, -0.7, 0.02});
  for (int k = 0; k < 100; ++k) {
    const Tensor next = sensitivity_step(s, Tensor({3}), 0.05, 0.5, SensitivityUpdate::proximal);
    for (std::size_t i = 0; i < 3; ++i) {
      if (s[i] != 0.0) {
        EXPECT_LT(std::abs(next[i]), std::abs(s[i]));
      } else {
        EXPECT_EQ(next[i], 0.0);
      }
    }
    s = next;
  }
  EXPECT_EQ(s.max_abs(), 0.0);
}

// The subgradient rule steps a fixed eta*lambda towards zero, so it only
// shrinks |s| while |s| >= eta*lambda; closer in it overshoots.
TEST(SensitivityStep, SubgradientStrictlyDecreasesWhileFarFromZero) {
  Tensor s = Tensor::vector({1.0, -1.0});
  for (int k = 0; k < 39; ++k) {  // 1 - 39 * 0.025 = 0.025
    const Tensor next = sensitivity_step(s, Tensor({2}), 0.05, 0.5, SensitivityUpdate::subgradient);
    EXPECT_LT(std::abs(next[0]), std::abs(s[0]));
    EXPECT_LT(std::abs(next[1]), std::abs(s[1]));
    s = next;
  }
}

TEST(Penalties, SparsityCountsTrainableLayersOnly) {
  NetworkGraph g({3});
  g.add_dense("a", Tensor({4, 3}))
      .add_sensitivity("s1", Tensor({4}, 1.0))
      .add_dense("b", Tensor({6, 4}))
      .add_sensitivity("s2", Tensor({6}, 1.0))
      .add_dense("c", Tensor({2, 6}))
      .add_sensitivity("out", Tensor({2}, 1.0));
  EXPECT_DOUBLE_EQ(sparsity_penalty(g), 10.0);
  g.mutable_parameter("s1", "s").fill(0.0);
  g.mutable_parameter("s2", "s").fill(0.0);
  EXPECT_EQ(sparsity_penalty(g), 0.0);
}

TEST(Penalties, SparsityUsesAbsoluteValues) {
  NetworkGraph g({2});
  g.add_dense("a", Tensor({2, 2})).add_sensitivity("s", Tensor::vector({-2, 3})).add_dense("b", Tensor({1, 2}));
  EXPECT_DOUBLE_EQ(sparsity_penalty(g), 5.0);
}

TEST(Penalties, DeviationIsMeanOfPerSampleLosses) {
  std::mt19937_64 rng(3);
  NetworkGraph g({4});
  g.add_dense("d", random_tensor({3, 4}, rng), random_tensor({3}, rng));
  Dataset data{random_tensor({2500, 4}, rng), random_tensor({2500, 3}, rng)};
  double sum = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Dataset one = data.slice(i, i + 1);
    sum += loss_value(network_predict(g, one.inputs), one.targets, LossKind::mse);
  }
  EXPECT_NEAR(deviation_penalty(g, data, LossKind::mse), sum / 2500.0, 1e-13);

  std::vector<std::size_t> perm(data.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = (i * 7919) % perm.size();
  EXPECT_NEAR(deviation_penalty(g, data.gather(perm), LossKind::mse),
              deviation_penalty(g, data, LossKind::mse), 1e-13);
}

TEST(Penalties, IdentityAutoencoderHasZeroDeviation) {
  NetworkGraph g({3});
  g.add_dense("d", Tensor::identity(3));
  std::mt19937_64 rng(4);
  EXPECT_EQ(deviation_penalty(g, autoencoding(random_tensor({10, 3}, rng)), LossKind::mse), 0.0);
}

TEST(TrainConfigValidation, RejectsBadValues) {
  TrainConfig c;
  c.step_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.lambda = -1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Training, FullWidthLinearAutoencoderReconstructs) {
  // Well-conditioned data: every direction carries unit variance, so plain
  // SGD reaches the identity map quickly.
  GaussianSpec spec{4, 4, 1.0, 1.0, 0.0};
  const Dataset data = gen_gaussian(spec, 500, 1);
  NetworkGraph g = build_linear_autoencoder(8, 8, 2);
  TrainConfig c;
  c.step_size = 0.3;
  c.epochs = 300;
  const auto stats = train_epochs(g, data, c);
  EXPECT_LT(stats.back().deviation, 1e-20);
  EXPECT_EQ(stats.back().nonzero_counts, std::vector<std::size_t>{8});
}

TEST(Training, HugeLambdaZeroesEverySensitivity) {
  GaussianSpec spec{4, 4, 1.0, 1e-4, 0.9};
  const Dataset data = gen_gaussian(spec, 200, 3);
  NetworkGraph g = build_relu_autoencoder(8, 6, 4);
  TrainConfig c;
  c.step_size = 0.1;
  c.epochs = 3;
  c.lambda = 100.0;
  const auto stats = train_epochs(g, data, c);
  EXPECT_EQ(stats.front().nonzero_counts, std::vector<std::size_t>{0});
  EXPECT_EQ(stats.back().sparsity, 0.0);
  // With the hidden code silenced, the output is the decoder bias alone, so
  // E can only approach the per-coordinate variance of the data.
  double variance = 0;
  for (std::size_t j = 0; j < 8; ++j) {
    double mean = 0, sq = 0;
    for (std::size_t i = 0; i < data.size(); ++i) mean += data.inputs.at(i, j);
    mean /= static_cast<double>(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) sq += std::pow(data.inputs.at(i, j) - mean, 2);
    variance += sq / static_cast<double>(data.size());
  }
  variance /= 8;
  EXPECT_GE(stats.back().deviation, variance - 1e-12);
}

TEST(Training, EqualSeedsGiveEqualStreams) {
  const Dataset data = gen_gaussian({4, 2, 1.0, 1e-4, 0.9}, 300, 5);
  TrainConfig c;
  c.epochs = 5;
  c.lambda = 1e-3;
  c.seed = 99;
  NetworkGraph a = build_linear_autoencoder(6, 4, 6), b = build_linear_autoencoder(6, 4, 6);
  EXPECT_EQ(train_epochs(a, data, c), train_epochs(b, data, c));
  EXPECT_EQ(a.parameter("hidden_s", "s"), b.parameter("hidden_s", "s"));
  EXPECT_EQ(a.parameter("encoder", "weights"), b.parameter("encoder", "weights"));
}

TEST(Training, FrozenSensitivityNeverMoves) {
  std::mt19937_64 rng(7);
  NetworkGraph g({4});
  g.add_dense("enc", random_tensor({5, 4}, rng))
      .add_sensitivity("s", Tensor({5}, 1.0))
      .add_dense("dec", random_tensor({4, 5}, rng))
      .add_sensitivity("out_s", Tensor({4}, 1.0));
  const Dataset data = autoencoding(random_tensor({64, 4}, rng));
  TrainConfig c;
  c.epochs = 10;
  c.lambda = 0.05;
  train_epochs(g, data, c);
  EXPECT_EQ(g.parameter("out_s", "s"), Tensor({4}, 1.0));
  EXPECT_NE(g.parameter("s", "s"), Tensor({5}, 1.0));
}

TEST(Training, DivergenceNamesTheEpoch) {
  const Dataset data = gen_gaussian({4, 4, 1.0, 1e-4, 0.9}, 100, 8);
  NetworkGraph g = build_linear_autoencoder(8, 8, 9);
  TrainConfig c;
  c.step_size = 50.0;
  c.epochs = 20;
  try {
    train_epochs(g, data, c);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.epoch(), 1u);
    EXPECT_NE(std::string(e.what()).find("epoch " + std::to_string(e.epoch())), std::string::npos);
  }
}

TEST(Training, ObjectiveDecreasesForSmallFullBatchStep) {
  const Dataset data = gen_gaussian({4, 4, 1.0, 1e-4, 0.9}, 200, 10);
  NetworkGraph g = build_linear_autoencoder(8, 5, 11);
  TrainConfig c;
  c.step_size = 1e-3;
  c.batch_size = data.size();
  c.shuffle = false;
  c.lambda = 1e-2;
  c.epochs = 1;
  for (int step = 0; step < 20; ++step) {
    const double before = deviation_penalty(g, data, LossKind::mse) + c.lambda * sparsity_penalty(g);
    train_epochs(g, data, c);
    const double after = deviation_penalty(g, data, LossKind::mse) + c.lambda * sparsity_penalty(g);
    EXPECT_LT(after, before) << "step " << step;
  }
}

TEST(EpochCsv, RoundTripsBitExactly) {
  const Dataset data = gen_gaussian({4, 2, 1.0, 1e-4, 0.9}, 100, 12);
  NetworkGraph g = build_linear_autoencoder(6, 4, 13);
  TrainConfig c;
  c.epochs = 4;
  c.lambda = 3e-3;
  const auto stats = train_epochs(g, data, c);
  std::stringstream ss;
  write_epoch_csv(ss, stats);
  EXPECT_EQ(ss.str().substr(0, ss.str().find('\n')), "epoch,E,S,lambda,nonzero_counts");
  EXPECT_EQ(read_epoch_csv(ss), stats);
}

TEST(Determinism, TensorStorageIsCacheLineAligned) {
  for (std::size_t n : {1, 3, 7, 1000}) {
    const Tensor t({n}, 1.0);
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(t.data().data()) % 64, 0u) << n;
    const Tensor s = Tensor({n, 1}, 2.0).slice_rows(n / 2, n);
    EXPECT_EQ(reinterpret_cast<std::uintptr_t>(s.data().data()) % 64, 0u) << n;
  }
}

TEST(Determinism, TrainingDoesNotDependOnHeapLayout) {
  std::mt19937_64 rng(4);
  Dataset data;
  data.inputs = random_tensor({200, 100}, rng);
  data.targets = data.inputs;
  TrainConfig c;
  c.step_size = 0.05;
  c.epochs = 3;
  c.lambda = 1e-3;
  c.seed = 2;
  NetworkGraph a = build_relu_autoencoder(100, 40, 5);
  train_epochs(a, data, c);
  for (std::size_t shift = 1; shift <= 24; ++shift) {
    // Small live allocations move later allocations to new heap offsets.
    std::vector<std::unique_ptr<char[]>> junk;
    for (std::size_t i = 0; i < shift; ++i) junk.emplace_back(new char[16 * (i % 5) + 8]);
    NetworkGraph b = build_relu_autoencoder(100, 40, 5);
    train_epochs(b, data, c);
    for (const char* layer : {"encoder", "decoder"}) {
      ASSERT_EQ(a.parameter(layer, "weights"), b.parameter(layer, "weights")) << layer << " " << shift;
    }
    ASSERT_EQ(a.parameter("hidden_s", "s"), b.parameter("hidden_s", "s")) << shift;
  }
}
