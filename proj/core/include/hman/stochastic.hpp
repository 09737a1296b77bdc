#pragma once

// Stochastic discrete units: Gumbel noise, the Gumbel-softmax / Gumbel-sigmoid
// relaxations, straight-through discretization and the learned temperature.
//
// All relaxations operate on logits: y = softmax((logits + g) / tau). Given a
// fixed noise tensor every soft output is a smooth function of its inputs.

#include <cstdint>

#include "hman/rng.hpp"
#include "hman/tensor.hpp"

namespace hman {

inline constexpr double kGumbelEpsilon = 1e-12;
inline constexpr double kBoundaryTemperature = 0.3;

struct GumbelNoise {
  Tensor values;
  // (seed, stream) of the generator that produced the samples.
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

// i.i.d. Gumbel(0,1): -log(-log(u)), u clamped to [eps, 1 - eps].
GumbelNoise sample_gumbel(const Shape& shape, Rng& rng);
GumbelNoise zero_noise(const Shape& shape);

class Temperature {
 public:
  enum class Mode { Constant, Adaptive };

  // Throws ParameterError unless 0 < value <= 1.
  static Temperature constant(double value);
  // Wraps a computed temperature (scalar or one per row); values are checked > 0.
  static Temperature adaptive(Tensor value);

  const Tensor& value() const { return value_; }
  Mode mode() const { return mode_; }

 private:
  Temperature(Tensor value, Mode mode) : value_(std::move(value)), mode_(mode) {}
  Tensor value_;
  Mode mode_;
};

// y = softmax((logits + g) / tau) over the last axis. `tau` is a scalar or,
// for 2-D logits, one value per row.
Tensor gumbel_softmax(const Tensor& logits, const GumbelNoise& noise, const Temperature& tau);

// y = sigmoid((pre + g - g') / tau); the two-class case of gumbel_softmax with
// logits (pre, 0) and noise (g, g').
Tensor gumbel_sigmoid(const Tensor& pre_activation, const GumbelNoise& noise_a,
                      const GumbelNoise& noise_b, const Temperature& tau);

// Straight-through threshold: forward 1 where y >= 0.5 else 0, backward identity.
Tensor hard_threshold(const Tensor& y);

// Straight-through row-wise one-hot at the argmax (lowest index on ties).
Tensor hard_onehot(const Tensor& y);

// tau = 1 / (softplus(h1 . w_temp + b_temp) + 1), one value per row of h1.
// h1 is [B x d] (or [d]), w_temp is [d x 1], b_temp has one element.
Temperature adaptive_tau(const Tensor& h1, const Tensor& w_temp, const Tensor& b_temp);

}  // namespace hman
