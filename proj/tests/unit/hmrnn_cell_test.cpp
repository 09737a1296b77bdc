#include <gtest/gtest.h>

#include <bit>
#include <cmath>

#include "hman/errors.hpp"
#include "hman/hmrnn_cell.hpp"
#include "oracles.hpp"

using namespace hman;

namespace {

constexpr std::size_t kIn = 3, kHidden = 4, kBatch = 2;

struct Fixture {
  LayerParams params;
  LayerState prev;
  Tensor below;
  Tensor above;

  explicit Fixture(std::uint64_t seed) {
    Rng rng(seed);
    params = LayerParams::init(kIn, kHidden, kHidden, rng);
    auto randn = [&](std::size_t r, std::size_t c) {
      std::vector<double> v(r * c);
      for (double& x : v) x = rng.normal();
      return Tensor::from({r, c}, std::move(v));
    };
    prev = {randn(kBatch, kHidden), randn(kBatch, kHidden), Tensor::zeros({kBatch, 1})};
    below = randn(kBatch, kIn);
    above = randn(kBatch, kHidden);
  }

  // Pre-activation of one row, computed directly from the parameter values.
  std::vector<double> pre_activation(std::size_t row, double z_prev, double z_below) const {
    const std::size_t w = 4 * kHidden + 1;
    std::vector<double> s(params.bias.values().begin(), params.bias.values().end());
    auto accumulate = [&](const Tensor& x, const Tensor& m, double gate) {
      for (std::size_t j = 0; j < w; ++j)
        for (std::size_t p = 0; p < x.dim(1); ++p) s[j] += gate * x.at(row, p) * m.at(p, j);
    };
    accumulate(prev.h, params.recurrent, 1.0);
    accumulate(above, params.top_down, z_prev);
    accumulate(below, params.bottom_up, z_below);
    return s;
  }

  LayerState run(double z_prev, double z_below, CellOptions options = {}) {
    prev.z = Tensor::full({kBatch, 1}, z_prev);
    Rng rng(99);
    return step(prev, below, Tensor::full({kBatch, 1}, z_below), &above, params, options, rng);
  }
};

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

}  // namespace

TEST(SelectOperation, TruthTable) {
  EXPECT_EQ(select_operation(0, 1), CellOp::Update);
  EXPECT_EQ(select_operation(0, 0), CellOp::Copy);
  EXPECT_EQ(select_operation(1, 0), CellOp::Flush);
  EXPECT_EQ(select_operation(1, 1), CellOp::Flush);
  EXPECT_STREQ(to_string(CellOp::Copy), "COPY");
}

TEST(CellStep, CopyKeepsStateBitwise) {
  Fixture fx(1);
  const LayerState next = fx.run(0, 0);
  EXPECT_TRUE(bitwise_equal(next.c, fx.prev.c));
  EXPECT_TRUE(bitwise_equal(next.h, fx.prev.h));
  EXPECT_TRUE(bitwise_equal(next.z, fx.prev.z));
}

TEST(CellStep, UpdateMatchesGateFormula) {
  Fixture fx(2);
  const LayerState next = fx.run(0, 1);
  for (std::size_t r = 0; r < kBatch; ++r) {
    const auto s = fx.pre_activation(r, 0, 1);
    for (std::size_t j = 0; j < kHidden; ++j) {
      const double i = oracle::sigmoid(s[j]);
      const double f = oracle::sigmoid(s[kHidden + j]);
      const double o = oracle::sigmoid(s[2 * kHidden + j]);
      const double g = std::tanh(s[3 * kHidden + j]);
      const double c = f * fx.prev.c.at(r, j) + i * g;
      EXPECT_NEAR(next.c.at(r, j), c, 1e-12);
      EXPECT_NEAR(next.h.at(r, j), o * std::tanh(c), 1e-12);
    }
    EXPECT_TRUE(next.z.at(r, 0) == 0.0 || next.z.at(r, 0) == 1.0);
  }
}

TEST(CellStep, FlushIgnoresPreviousMemory) {
  for (double z_below : {0.0, 1.0}) {
    Fixture fx(3);
    const LayerState a = fx.run(1, z_below);
    fx.prev.c = Tensor::full({kBatch, kHidden}, 123.0);
    const LayerState b = fx.run(1, z_below);
    EXPECT_TRUE(bitwise_equal(a.c, b.c));
    EXPECT_TRUE(bitwise_equal(a.h, b.h));
    for (std::size_t r = 0; r < kBatch; ++r) {
      const auto s = fx.pre_activation(r, 1, z_below);
      for (std::size_t j = 0; j < kHidden; ++j) {
        const double c = oracle::sigmoid(s[j]) * std::tanh(s[3 * kHidden + j]);
        EXPECT_NEAR(a.c.at(r, j), c, 1e-12);
        EXPECT_NEAR(a.h.at(r, j), oracle::sigmoid(s[2 * kHidden + j]) * std::tanh(c), 1e-12);
      }
    }
  }
}

TEST(CellStep, FlushWithClosedInputGateEmptiesMemory) {
  Fixture fx(4);
  auto b = fx.params.bias.mutable_values();
  for (std::size_t j = 0; j < kHidden; ++j) b[j] = -800.0;
  const LayerState next = fx.run(1, 1);
  for (double v : next.c.values()) EXPECT_EQ(v, 0.0);
}

TEST(CellStep, UpdateWithOpenForgetAndClosedInputKeepsMemory) {
  Fixture fx(5);
  auto b = fx.params.bias.mutable_values();
  for (std::size_t j = 0; j < kHidden; ++j) {
    b[j] = -800.0;
    b[kHidden + j] = 800.0;
  }
  const LayerState next = fx.run(0, 1);
  EXPECT_TRUE(bitwise_equal(next.c, fx.prev.c));
}

TEST(CellStep, CopyContributesNoParameterGradient) {
  Fixture fx(6);
  const LayerState next = fx.run(0, 0);
  add(sum(next.h), sum(next.c)).backward();
  for (const Tensor* p : {&fx.params.recurrent, &fx.params.top_down, &fx.params.bottom_up, &fx.params.bias}) {
    for (double g : p->grad()) EXPECT_EQ(g, 0.0);
  }

  Fixture fy(6);
  const LayerState upd = fy.run(0, 1);
  add(sum(upd.h), sum(upd.c)).backward();
  double total = 0;
  for (double g : fy.params.recurrent.grad()) total += std::abs(g);
  EXPECT_GT(total, 0.0);
}

TEST(CellStep, LiteralHiddenStateOmitsTanh) {
  Fixture fx(7);
  CellOptions o;
  o.literal_eq3 = true;
  const LayerState next = fx.run(0, 1, o);
  const auto s = fx.pre_activation(0, 0, 1);
  EXPECT_NEAR(next.h.at(0, 0), oracle::sigmoid(s[2 * kHidden]) * next.c.at(0, 0), 1e-12);
}

TEST(CellStep, ForcedBoundaryIsOne) {
  Fixture fx(8);
  CellOptions o;
  o.force_boundary = true;
  const LayerState next = fx.run(0, 1, o);
  for (double z : next.z.values()) EXPECT_EQ(z, 1.0);
}

TEST(CellStep, NoiseFreeEvalBoundaryIsSignOfPreActivation) {
  Fixture fx(9);
  CellOptions o;
  o.training = false;
  const LayerState a = fx.run(0, 1, o);
  const LayerState b = fx.run(0, 1, o);
  EXPECT_TRUE(bitwise_equal(a.z, b.z));
  for (std::size_t r = 0; r < kBatch; ++r) {
    const double pre = fx.pre_activation(r, 0, 1)[4 * kHidden];
    EXPECT_EQ(a.z.at(r, 0), pre >= 0 ? 1.0 : 0.0);
  }
}

TEST(CellStep, RowsMayTakeDifferentOperations) {
  Fixture fx(10);
  fx.prev.z = Tensor::from({kBatch, 1}, {0.0, 1.0});
  Rng rng(1);
  const LayerState next =
      step(fx.prev, fx.below, Tensor::from({kBatch, 1}, {0.0, 0.0}), &fx.above, fx.params, {}, rng);
  for (std::size_t j = 0; j < kHidden; ++j) EXPECT_EQ(next.c.at(0, j), fx.prev.c.at(0, j));
  EXPECT_NE(next.c.at(1, 0), fx.prev.c.at(1, 0));
}

TEST(CellStep, ValidatesInputs) {
  Fixture fx(11);
  Rng rng(1);
  const Tensor ones = Tensor::full({kBatch, 1}, 1.0);
  EXPECT_THROW(step(fx.prev, Tensor::zeros({kBatch, kIn + 1}), ones, &fx.above, fx.params, {}, rng), DimensionError);
  EXPECT_THROW(step(fx.prev, fx.below, Tensor::full({kBatch, 1}, 0.5), &fx.above, fx.params, {}, rng), ContractError);
  EXPECT_THROW(step(fx.prev, fx.below, ones, nullptr, fx.params, {}, rng), ContractError);
  LayerParams top = LayerParams::init(kIn, kHidden, std::nullopt, rng);
  EXPECT_THROW(step(fx.prev, fx.below, ones, &fx.above, top, {}, rng), ContractError);
  CellOptions relaxed;
  relaxed.discrete = DiscreteMode::Relaxed;
  EXPECT_NO_THROW(step(fx.prev, fx.below, Tensor::full({kBatch, 1}, 0.5), &fx.above, fx.params, relaxed, rng));
}

TEST(LayerParams, InitializationLayout) {
  Rng rng(12);
  const LayerParams p = LayerParams::init(5, 3, 2, rng);
  EXPECT_EQ(p.width(), 13u);
  EXPECT_EQ(p.recurrent.shape(), (Shape{3, 13}));
  EXPECT_EQ(p.top_down.shape(), (Shape{2, 13}));
  EXPECT_EQ(p.bottom_up.shape(), (Shape{5, 13}));
  for (std::size_t j = 0; j < 13; ++j) EXPECT_EQ(p.bias[j], j >= 3 && j < 6 ? 1.0 : 0.0);
  const double bound = 1.0 / std::sqrt(3.0);
  for (double v : p.recurrent.values()) EXPECT_LE(std::abs(v), bound);
}
