#pragma once

// One layer of a hierarchical multiscale RNN.
//
// The layer's pre-activation is a stacked vector laid out as
//
//     [ i | f | o | g | z ]      (4 * hidden + 1 columns)
//
// and is the sum of a recurrent term, a top-down term gated by the layer's
// own previous boundary and a bottom-up term gated by the boundary of the
// layer below. The boundary pair (z_prev of this layer, z of the layer below)
// selects one of three operations:
//
//     z_prev = 0, z_below = 1  -> UPDATE   c = f*c_prev + i*g,  h = o*tanh(c)
//     z_prev = 0, z_below = 0  -> COPY     (c, h, z) = previous values
//     z_prev = 1               -> FLUSH    c = i*g,             h = o*tanh(c)
//
// The selection is realized with multiplicative masks so that a batch can mix
// operations row by row and boundary gradients flow through the masks
// (straight-through). With binary boundaries the masks are exactly 0 or 1.

#include <optional>

#include "hman/rng.hpp"
#include "hman/stochastic.hpp"
#include "hman/tensor.hpp"

namespace hman {

// Hard: discretize forward, straight-through backward.
// Relaxed: keep the soft relaxation forward; used for finite-difference checks
// of exactly the graph that hard mode backpropagates through.
enum class DiscreteMode { Hard, Relaxed };

// How boundaries are computed when not training.
enum class EvalBoundary { NoiseFree, Sampled };

enum class CellOp { Update, Copy, Flush };

// Operation chosen by a binary boundary pair.
CellOp select_operation(double z_prev, double z_below);
const char* to_string(CellOp op);

struct CellOptions {
  bool training = true;
  bool literal_eq3 = false;  // h = o * c instead of o * tanh(c)
  DiscreteMode discrete = DiscreteMode::Hard;
  EvalBoundary eval_boundary = EvalBoundary::NoiseFree;
  bool force_boundary = false;  // z = 1 at every step
  double boundary_tau = kBoundaryTemperature;
};

struct LayerParams {
  std::size_t input = 0;
  std::size_t hidden = 0;
  Tensor recurrent;  // [hidden x 4h+1]
  Tensor top_down;   // [above_hidden x 4h+1]; undefined for the top layer
  Tensor bottom_up;  // [input x 4h+1]
  Tensor bias;       // [4h+1]

  std::size_t width() const { return 4 * hidden + 1; }

  // Uniform(-1/sqrt(hidden), 1/sqrt(hidden)) matrices, forget bias 1, other biases 0.
  static LayerParams init(std::size_t input, std::size_t hidden, std::optional<std::size_t> above_hidden,
                          Rng& rng);
};

struct LayerState {
  Tensor c;  // [B x hidden]
  Tensor h;  // [B x hidden]
  Tensor z;  // [B x 1]

  static LayerState zeros(std::size_t batch, std::size_t hidden);
};

// Advances one layer by one time step.
//   below_h      layer input ([B x input]): attended features for layer 1
//   below_z      boundary of the layer below at this step ([B x 1]); ones for layer 1
//   above_h_prev previous hidden state of the layer above; nullptr for the top layer
// Draws two Gumbel samples per row from `rng` when the boundary is sampled.
LayerState step(const LayerState& prev, const Tensor& below_h, const Tensor& below_z,
                const Tensor* above_h_prev, const LayerParams& params, const CellOptions& options, Rng& rng);

}  // namespace hman
