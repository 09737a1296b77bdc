#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "hman/errors.hpp"
#include "hman/stochastic.hpp"
#include "oracles.hpp"

using namespace hman;

TEST(GumbelNoise, SamplesAreFiniteAndHaveEulerMean) {
  Rng rng(3);
  const GumbelNoise g = sample_gumbel({200000}, rng);
  double mean = 0;
  for (double v : g.values.values()) {
    ASSERT_TRUE(std::isfinite(v));
    mean += v;
  }
  mean /= 200000.0;
  EXPECT_NEAR(mean, 0.5772156649, 0.01);
  EXPECT_EQ(g.seed, 3u);
}

TEST(GumbelNoise, ClampBoundsExtremes) {
  const double lo = -std::log(-std::log(kGumbelEpsilon));
  const double hi = -std::log(-std::log(1.0 - kGumbelEpsilon));
  Rng rng(4);
  for (double v : sample_gumbel({10000}, rng).values.values()) {
    EXPECT_GE(v, lo);
    EXPECT_LE(v, hi);
  }
}

TEST(Temperature, RejectsOutOfRange) {
  EXPECT_THROW(Temperature::constant(0.0), ParameterError);
  EXPECT_THROW(Temperature::constant(-0.3), ParameterError);
  EXPECT_THROW(Temperature::constant(1.5), ParameterError);
  EXPECT_THROW(Temperature::adaptive(Tensor::scalar(0.0)), ParameterError);
  EXPECT_NO_THROW(Temperature::constant(1.0));
}

TEST(GumbelSoftmax, SymmetricLogitsWithoutNoise) {
  const Tensor y = gumbel_softmax(Tensor::from({2}, {0, 0}), zero_noise({2}), Temperature::constant(1.0));
  EXPECT_DOUBLE_EQ(y[0], 0.5);
  EXPECT_DOUBLE_EQ(y[1], 0.5);
}

TEST(GumbelSoftmax, LowTemperatureApproachesArgmax) {
  GumbelNoise g{Tensor::from({2}, {1, 0})};
  const Tensor y = gumbel_softmax(Tensor::from({2}, {0, 0}), g, Temperature::constant(0.01));
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
}

TEST(GumbelSoftmax, NoiseShapeMustMatch) {
  EXPECT_THROW(gumbel_softmax(Tensor::zeros({3}), zero_noise({2}), Temperature::constant(0.5)), DimensionError);
}

TEST(GumbelSoftmax, OutputsSumToOneForAllTemperatures) {
  Rng rng(5);
  for (double tau : {1e-3, 0.01, 0.1, 0.3, 0.7, 1.0}) {
    const Tensor logits = Tensor::from({3, 5}, {3, -1, 0, 2, 8, -20, 1, 1, 0, 4, 0.5, 0, 0, 0, 100});
    const Tensor y = gumbel_softmax(logits, sample_gumbel({3, 5}, rng), Temperature::constant(tau));
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += y.at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-12) << "tau " << tau;
    }
  }
}

TEST(GumbelSoftmax, PerRowTemperature) {
  const Tensor logits = Tensor::from({2, 2}, {1, 0, 1, 0});
  const Tensor y = gumbel_softmax(logits, zero_noise({2, 2}), Temperature::adaptive(Tensor::from({2, 1}, {1.0, 0.5})));
  EXPECT_NEAR(y.at(0, 0), oracle::sigmoid(1.0), 1e-15);
  EXPECT_NEAR(y.at(1, 0), oracle::sigmoid(2.0), 1e-15);
}

TEST(GumbelSoftmax, ArgmaxFrequenciesFollowSoftmax) {
  const std::vector<std::vector<double>> cases = {{0, 0, 0}, {1, 2, 3, 0.5}, {4, 0, -1, 0.2, -3}};
  Rng rng(11);
  for (const auto& logits : cases) {
    const std::size_t k = logits.size();
    const auto expected = oracle::softmax(logits);
    std::vector<std::size_t> counts(k, 0);
    const std::size_t n = 100000;
    const Tensor lt = Tensor::from({1, k}, logits);
    for (std::size_t i = 0; i < n; ++i) {
      const Tensor y = gumbel_softmax(lt, sample_gumbel({1, k}, rng), Temperature::constant(0.5));
      ++counts[argmax(y.values())];
    }
    for (std::size_t c = 0; c < k; ++c) {
      EXPECT_NEAR(static_cast<double>(counts[c]) / n, expected[c], 0.01);
    }
    EXPECT_LT(oracle::chi_square(counts, expected), oracle::chi_square_critical_01(k - 1));
  }
}

TEST(GumbelSigmoid, EqualNoiseCancels) {
  GumbelNoise g{Tensor::from({1}, {0.7})};
  for (double tau : {0.1, 0.3, 1.0}) {
    EXPECT_DOUBLE_EQ(gumbel_sigmoid(Tensor::from({1}, {0.0}), g, g, Temperature::constant(tau))[0], 0.5);
  }
}

TEST(GumbelSigmoid, Saturates) {
  const Tensor y = gumbel_sigmoid(Tensor::from({1}, {20.0}), zero_noise({1}), zero_noise({1}), Temperature::constant(0.3));
  EXPECT_NEAR(y[0], 1.0, 1e-12);
}

TEST(GumbelSigmoid, MatchesScalarFormulaAtSeed42) {
  Rng rng(42);
  const GumbelNoise a = sample_gumbel({1}, rng);
  const GumbelNoise b = sample_gumbel({1}, rng);
  const double y = gumbel_sigmoid(Tensor::from({1}, {0.5}), a, b, Temperature::constant(0.3))[0];

  Rng replay(42);
  const double u1 = std::clamp(replay.uniform(), 1e-12, 1 - 1e-12);
  const double u2 = std::clamp(replay.uniform(), 1e-12, 1 - 1e-12);
  const double g1 = -std::log(-std::log(u1));
  const double g2 = -std::log(-std::log(u2));
  EXPECT_NEAR(y, 1.0 / (1.0 + std::exp(-(0.5 + g1 - g2) / 0.3)), 1e-15);
}

TEST(GumbelSigmoid, IsTheTwoClassGumbelSoftmax) {
  Rng rng(8);
  const GumbelNoise a = sample_gumbel({1}, rng);
  const GumbelNoise b = sample_gumbel({1}, rng);
  const double y = gumbel_sigmoid(Tensor::from({1}, {0.8}), a, b, Temperature::constant(0.4))[0];
  GumbelNoise pair{Tensor::from({2}, {a.values[0], b.values[0]})};
  const Tensor two = gumbel_softmax(Tensor::from({2}, {0.8, 0.0}), pair, Temperature::constant(0.4));
  EXPECT_NEAR(y, two[0], 1e-14);
}

TEST(GumbelSigmoid, ThresholdedSampleIsBernoulliOfSigmoid) {
  Rng rng(13);
  const double pre = 0.6;
  std::size_t ones = 0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const GumbelNoise a = sample_gumbel({1}, rng);
    const GumbelNoise b = sample_gumbel({1}, rng);
    ones += hard_threshold(gumbel_sigmoid(Tensor::from({1}, {pre}), a, b, Temperature::constant(0.3)))[0] == 1.0;
  }
  EXPECT_NEAR(static_cast<double>(ones) / n, oracle::sigmoid(pre), 0.01);
}

TEST(HardThreshold, InclusiveAtOneHalf) {
  const Tensor z = hard_threshold(Tensor::from({3}, {0.6, 0.4, 0.5}));
  EXPECT_EQ(z[0], 1.0);
  EXPECT_EQ(z[1], 0.0);
  EXPECT_EQ(z[2], 1.0);
}

TEST(HardThreshold, StraightThroughGradient) {
  Tensor pre = Tensor::from({3}, {0.3, -1.2, 2.0}, true);
  const Tensor v = Tensor::from({3}, {1.5, -2.0, 0.7});
  sum(mul(hard_threshold(sigmoid(pre)), v)).backward();
  const auto hard = pre.grad();
  pre.zero_grad();
  sum(mul(sigmoid(pre), v)).backward();
  EXPECT_EQ(hard, pre.grad());
}

TEST(HardOnehot, SelectsArgmax) {
  const Tensor y = hard_onehot(Tensor::from({3}, {0.1, 0.7, 0.2}));
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), (std::vector<double>{0, 1, 0}));
}

TEST(HardOnehot, TieGoesToLowestIndex) {
  const Tensor y = hard_onehot(Tensor::from({2}, {0.5, 0.5}));
  EXPECT_EQ(y[0], 1.0);
  EXPECT_EQ(y[1], 0.0);
}

TEST(HardOnehot, RowWise) {
  const Tensor y = hard_onehot(Tensor::from({2, 3}, {0.2, 0.3, 0.5, 0.6, 0.3, 0.1}));
  EXPECT_EQ(y.at(0, 2), 1.0);
  EXPECT_EQ(y.at(1, 0), 1.0);
  EXPECT_DOUBLE_EQ(sum(y).item(), 2.0);
}

TEST(HardOnehot, StraightThroughMatchesSoftGradient) {
  Tensor logits = Tensor::from({4}, {0.2, 1.1, -0.5, 0.4}, true);
  const Tensor v = Tensor::from({4}, {2.0, -1.0, 0.5, 3.0});
  Rng rng(21);
  const GumbelNoise g = sample_gumbel({4}, rng);
  const Temperature tau = Temperature::constant(0.3);
  sum(mul(hard_onehot(gumbel_softmax(logits, g, tau)), v)).backward();
  const auto through_hard = logits.grad();
  logits.zero_grad();
  sum(mul(gumbel_softmax(logits, g, tau), v)).backward();
  EXPECT_EQ(through_hard, logits.grad());
}

TEST(AdaptiveTau, ZeroPreActivation) {
  const Temperature t = adaptive_tau(Tensor::from({1, 2}, {0, 0}), Tensor::from({2, 1}, {1, 1}), Tensor::from({1}, {0}));
  EXPECT_NEAR(t.value()[0], 1.0 / (std::log(2.0) + 1.0), 1e-9);
  EXPECT_NEAR(t.value()[0], 0.590616, 1e-6);
  EXPECT_EQ(t.mode(), Temperature::Mode::Adaptive);
}

TEST(AdaptiveTau, LimitsAndFormula) {
  const Tensor w = Tensor::from({1, 1}, {1.0});
  const Tensor h = Tensor::from({1, 1}, {1.0});
  EXPECT_NEAR(adaptive_tau(h, w, Tensor::from({1}, {-1000.0})).value()[0], 1.0, 1e-15);
  const double at10 = adaptive_tau(h, w, Tensor::from({1}, {9.0})).value()[0];
  EXPECT_NEAR(at10, 1.0 / (oracle::softplus(10.0) + 1.0), 1e-15);
  EXPECT_NEAR(1.0 / at10, 11.0000454, 1e-7);
}

TEST(AdaptiveTau, AlwaysInUnitInterval) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const double scale = std::pow(10.0, trial % 7 - 2);
    std::vector<double> h(12), w(4);
    for (double& x : h) x = scale * rng.normal();
    for (double& x : w) x = scale * rng.normal();
    const Temperature t = adaptive_tau(Tensor::from({3, 4}, h), Tensor::from({4, 1}, w),
                                       Tensor::from({1}, {scale * rng.normal()}));
    ASSERT_EQ(t.value().shape(), (Shape{3, 1}));
    for (double v : t.value().values()) {
      EXPECT_GT(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(AdaptiveTau, GradientMatchesFiniteDifferences) {
  const std::vector<double> w0 = {0.3, -0.7, 1.1};
  auto f = [](const std::vector<double>& w) {
    NoGradGuard guard;
    return adaptive_tau(Tensor::from({1, 3}, {0.5, 1.5, -2}), Tensor::from({3, 1}, w), Tensor::from({1}, {0.2}))
        .value()[0];
  };
  Tensor wt = Tensor::from({3, 1}, w0, true);
  sum(adaptive_tau(Tensor::from({1, 3}, {0.5, 1.5, -2}), wt, Tensor::from({1}, {0.2})).value()).backward();
  EXPECT_LT(oracle::max_rel_error(wt.grad(), oracle::numeric_gradient(f, w0)), 1e-6);
}
