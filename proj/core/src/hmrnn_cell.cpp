#include "hman/hmrnn_cell.hpp"

#include <cmath>

#include "hman/errors.hpp"

namespace hman {

namespace {

Tensor uniform_matrix(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = (2.0 * rng.uniform() - 1.0) * bound;
  return Tensor::from({rows, cols}, std::move(v), true);
}

void require_binary(const Tensor& z, const char* what) {
  for (double v : z.values()) {
    if (v != 0.0 && v != 1.0) {
      throw ContractError(std::string(what) + " must be binary, got " + std::to_string(v));
    }
  }
}

void require_unit_interval(const Tensor& z, const char* what) {
  for (double v : z.values()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ContractError(std::string(what) + " must lie in [0, 1], got " + std::to_string(v));
    }
  }
}

void require_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw DimensionError(std::string(what) + ": expected " + shape_string(expected) + ", got " +
                         shape_string(t.shape()));
  }
}

}  // namespace

CellOp select_operation(double z_prev, double z_below) {
  if (z_prev == 1.0) return CellOp::Flush;
  return z_below == 1.0 ? CellOp::Update : CellOp::Copy;
}

const char* to_string(CellOp op) {
  switch (op) {
    case CellOp::Update: return "UPDATE";
    case CellOp::Copy: return "COPY";
    case CellOp::Flush: return "FLUSH";
  }
  return "?";
}

LayerParams LayerParams::init(std::size_t input, std::size_t hidden, std::optional<std::size_t> above_hidden,
                              Rng& rng) {
  LayerParams p;
  p.input = input;
  p.hidden = hidden;
  const std::size_t w = 4 * hidden + 1;
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  p.recurrent = uniform_matrix(hidden, w, bound, rng);
  if (above_hidden) p.top_down = uniform_matrix(*above_hidden, w, bound, rng);
  p.bottom_up = uniform_matrix(input, w, bound, rng);
  std::vector<double> b(w, 0.0);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;
  p.bias = Tensor::from({w}, std::move(b), true);
  return p;
}

LayerState LayerState::zeros(std::size_t batch, std::size_t hidden) {
  return {Tensor::zeros({batch, hidden}), Tensor::zeros({batch, hidden}), Tensor::zeros({batch, 1})};
}

LayerState step(const LayerState& prev, const Tensor& below_h, const Tensor& below_z,
                const Tensor* above_h_prev, const LayerParams& params, const CellOptions& options, Rng& rng) {
  const std::size_t batch = prev.h.dim(0);
  const std::size_t hidden = params.hidden;
  require_shape(prev.c, {batch, hidden}, "cell memory");
  require_shape(prev.h, {batch, hidden}, "hidden state");
  require_shape(prev.z, {batch, 1}, "previous boundary");
  require_shape(below_h, {batch, params.input}, "bottom-up input");
  require_shape(below_z, {batch, 1}, "bottom-up boundary");
  if (options.discrete == DiscreteMode::Hard) {
    require_binary(prev.z, "previous boundary");
    require_binary(below_z, "bottom-up boundary");
  } else {
    require_unit_interval(prev.z, "previous boundary");
    require_unit_interval(below_z, "bottom-up boundary");
  }
  if (params.top_down.defined() != (above_h_prev != nullptr)) {
    throw ContractError(params.top_down.defined() ? "layer with a top-down matrix needs the layer above"
                                                  : "top layer received a top-down input");
  }

  Tensor s = matmul(prev.h, params.recurrent);
  if (above_h_prev) {
    require_shape(*above_h_prev, {batch, params.top_down.dim(0)}, "top-down input");
    s = add(s, matmul(mul_col(*above_h_prev, prev.z), params.top_down));
  }
  s = add(s, matmul(mul_col(below_h, below_z), params.bottom_up));
  s = add_bias(s, params.bias);

  const Tensor i = sigmoid(slice_cols(s, 0, hidden));
  const Tensor f = sigmoid(slice_cols(s, hidden, 2 * hidden));
  const Tensor o = sigmoid(slice_cols(s, 2 * hidden, 3 * hidden));
  const Tensor g = tanh(slice_cols(s, 3 * hidden, 4 * hidden));
  const Tensor z_pre = slice_cols(s, 4 * hidden, 4 * hidden + 1);

  Tensor z_new;
  if (options.force_boundary) {
    z_new = Tensor::full({batch, 1}, 1.0);
  } else {
    const Temperature tau = Temperature::constant(options.boundary_tau);
    Tensor soft;
    if (options.training || options.eval_boundary == EvalBoundary::Sampled) {
      const GumbelNoise ga = sample_gumbel({batch, 1}, rng);
      const GumbelNoise gb = sample_gumbel({batch, 1}, rng);
      soft = gumbel_sigmoid(z_pre, ga, gb, tau);
    } else {
      soft = sigmoid(div(z_pre, tau.value()));
    }
    z_new = options.discrete == DiscreteMode::Hard ? hard_threshold(soft) : soft;
  }

  // copy = (1 - z_prev)(1 - z_below); 1 - copy = flush + update.
  const Tensor copy = mul(one_minus(prev.z), one_minus(below_z));
  const Tensor write = one_minus(copy);
  const Tensor update = mul(one_minus(prev.z), below_z);

  const Tensor ig = mul(i, g);
  const Tensor c = add(add(mul_col(prev.c, copy), mul_col(mul(f, prev.c), update)), mul_col(ig, write));
  const Tensor h_new = options.literal_eq3 ? mul(o, c) : mul(o, tanh(c));
  const Tensor h = add(mul_col(prev.h, copy), mul_col(h_new, write));
  const Tensor z = add(mul(prev.z, copy), mul(z_new, write));
  return {c, h, z};
}

}  // namespace hman
