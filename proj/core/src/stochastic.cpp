#include "hman/stochastic.hpp"

#include <cmath>

#include "hman/errors.hpp"

namespace hman {

namespace {

void check_positive(const Tensor& tau) {
  for (double v : tau.values()) {
    if (!(v > 0.0)) throw ParameterError("temperature must be positive, got " + std::to_string(v));
  }
}

// x / tau where tau is a scalar, equal-shaped, or a per-row column.
Tensor divide_by_temperature(const Tensor& x, const Tensor& tau) {
  if (tau.size() == 1 || tau.shape() == x.shape()) return div(x, tau);
  if (x.rank() == 2 && tau.size() == x.dim(0)) return mul_col(x, div(Tensor::scalar(1.0), tau));
  throw DimensionError("temperature " + shape_string(tau.shape()) + " does not match " +
                       shape_string(x.shape()));
}

Tensor straight_through(const Tensor& y, std::vector<double> forward) {
  return make_op_result(y.shape(), std::move(forward), {&y}, [](detail::Node& self) {
    detail::Node& parent = *self.parents[0];
    if (!parent.requires_grad) return;
    auto& g = parent.grad_buffer();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

}  // namespace

GumbelNoise sample_gumbel(const Shape& shape, Rng& rng) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = -std::log(-std::log(rng.uniform_clamped(kGumbelEpsilon)));
  return {Tensor::from(shape, std::move(v)), rng.seed(), rng.stream()};
}

GumbelNoise zero_noise(const Shape& shape) { return {Tensor::zeros(shape), 0, 0}; }

Temperature Temperature::constant(double value) {
  if (!(value > 0.0) || value > 1.0) {
    throw ParameterError("constant temperature must lie in (0, 1], got " + std::to_string(value));
  }
  return Temperature(Tensor::scalar(value), Mode::Constant);
}

Temperature Temperature::adaptive(Tensor value) {
  check_positive(value);
  return Temperature(std::move(value), Mode::Adaptive);
}

Tensor gumbel_softmax(const Tensor& logits, const GumbelNoise& noise, const Temperature& tau) {
  check_positive(tau.value());
  if (noise.values.shape() != logits.shape()) {
    throw DimensionError("gumbel_softmax: noise " + shape_string(noise.values.shape()) +
                         " does not match logits " + shape_string(logits.shape()));
  }
  return softmax(divide_by_temperature(add(logits, noise.values), tau.value()), -1);
}

Tensor gumbel_sigmoid(const Tensor& pre_activation, const GumbelNoise& noise_a,
                      const GumbelNoise& noise_b, const Temperature& tau) {
  check_positive(tau.value());
  if (noise_a.values.shape() != pre_activation.shape() || noise_b.values.shape() != pre_activation.shape()) {
    throw DimensionError("gumbel_sigmoid: noise does not match pre-activation " +
                         shape_string(pre_activation.shape()));
  }
  const Tensor shifted = add(pre_activation, sub(noise_a.values, noise_b.values));
  return sigmoid(divide_by_temperature(shifted, tau.value()));
}

Tensor hard_threshold(const Tensor& y) {
  std::vector<double> out(y.size());
  auto yv = y.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = yv[i] >= 0.5 ? 1.0 : 0.0;
  return straight_through(y, std::move(out));
}

Tensor hard_onehot(const Tensor& y) {
  const std::size_t rows = y.rank() == 2 ? y.dim(0) : 1;
  const std::size_t cols = y.size() / rows;
  std::vector<double> out(y.size(), 0.0);
  auto yv = y.values();
  for (std::size_t r = 0; r < rows; ++r) out[r * cols + argmax(yv.subspan(r * cols, cols))] = 1.0;
  return straight_through(y, std::move(out));
}

Temperature adaptive_tau(const Tensor& h1, const Tensor& w_temp, const Tensor& b_temp) {
  const Tensor rows = h1.rank() == 1 ? reshape(h1, {1, h1.size()}) : h1;
  if (w_temp.rank() != 2 || w_temp.dim(1) != 1 || b_temp.size() != 1) {
    throw DimensionError("adaptive_tau: expected w_temp [d x 1] and a scalar bias, got " +
                         shape_string(w_temp.shape()) + " and " + shape_string(b_temp.shape()));
  }
  const Tensor pre = add_bias(matmul(rows, w_temp), b_temp);
  return Temperature::adaptive(div(Tensor::scalar(1.0), add_scalar(softplus(pre), 1.0)));
}

}  // namespace hman
