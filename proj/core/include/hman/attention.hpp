#pragma once

// Spatial attention over the K*K locations of a frame feature grid, driven by
// the previous first-layer hidden state.
//
//   soft       weights = softmax(h1 W_loc), x = sum_i w_i X_i
//   gumbel     weights = onehot(gumbel_softmax(h1 W_loc, g, tau)), straight-through
//   reinforce  location sampled from softmax(h1 W_loc); trained with a
//              score-function surrogate and a moving-average baseline

#include <optional>
#include <string>
#include <vector>

#include "hman/hmrnn_cell.hpp"
#include "hman/rng.hpp"
#include "hman/stochastic.hpp"
#include "hman/tensor.hpp"

namespace hman {

enum class AttentionMode { Soft, Reinforce, GumbelConstant, GumbelAdaptive };

std::string to_string(AttentionMode mode);
// Accepts "soft", "reinforce", "gumbel-constant", "gumbel-adaptive".
AttentionMode parse_attention_mode(const std::string& name);
bool is_hard(AttentionMode mode);

inline constexpr double kHardAttentionTemperature = 0.3;

struct AttentionParams {
  Tensor location;  // [d x K^2]; column i scores location i
  Tensor temp_w;    // [d x 1], adaptive temperature only
  Tensor temp_b;    // [1], adaptive temperature only

  static AttentionParams init(std::size_t hidden, std::size_t locations, bool adaptive, Rng& rng);
};

struct AttentionResult {
  Tensor weights;   // [B x K^2]
  Tensor attended;  // [B x D]
  std::vector<std::size_t> selected;  // hard modes: chosen location per row
  Tensor log_prob;  // reinforce: [B x 1] log alpha_selected
  Tensor tau;       // gumbel modes: temperature used ([1] or [B x 1])
};

struct AttentionOptions {
  bool training = true;
  DiscreteMode discrete = DiscreteMode::Hard;
};

// features: [B x K^2 x D]; h1_prev: [B x d].
AttentionResult soft_attend(const Tensor& h1_prev, const Tensor& features, const AttentionParams& params);

// Straight-through Gumbel selection. In evaluation the selection is the
// noise-free argmax of the scores.
AttentionResult gumbel_hard_attend(const Tensor& h1_prev, const Tensor& features, const AttentionParams& params,
                                   const Temperature& tau, Rng& rng, const AttentionOptions& options = {});

// Categorical sample (training) or argmax (evaluation) of softmax scores.
AttentionResult reinforce_hard_attend(const Tensor& h1_prev, const Tensor& features,
                                      const AttentionParams& params, Rng& rng, bool training);

// Same as reinforce_hard_attend with the locations given explicitly.
AttentionResult reinforce_select(const Tensor& h1_prev, const Tensor& features, const AttentionParams& params,
                                 std::span<const std::size_t> locations);

// Surrogate whose gradient is
//   -[d log_likelihood + lambda (log_likelihood - baseline) d sum_t log_probs_t]
// The reward factor is a constant in the graph.
Tensor reinforce_grad_terms(const std::vector<Tensor>& log_probs, const Tensor& log_likelihood, double baseline,
                            double lambda);

// Batched form: `log_prob_sum` and `log_likelihood` are [B x 1]; returns the
// mean surrogate over rows.
Tensor reinforce_surrogate(const Tensor& log_prob_sum, const Tensor& log_likelihood, double baseline,
                           double lambda);

// b_k = 0.9 b_{k-1} + 0.1 log_likelihood
double baseline_update(double previous, double log_likelihood);

}  // namespace hman
