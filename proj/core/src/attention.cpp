#include "hman/attention.hpp"

#include <cmath>

#include "hman/errors.hpp"

namespace hman {

namespace {

void check_inputs(const Tensor& h1_prev, const Tensor& features, const AttentionParams& params) {
  if (h1_prev.rank() != 2 || features.rank() != 3 || params.location.rank() != 2 ||
      h1_prev.dim(1) != params.location.dim(0) || features.dim(0) != h1_prev.dim(0) ||
      features.dim(1) != params.location.dim(1)) {
    throw DimensionError("attention: hidden " + shape_string(h1_prev.shape()) + ", features " +
                         shape_string(features.shape()) + " and location weights " +
                         shape_string(params.location.shape()) + " are inconsistent");
  }
}

Tensor onehot_rows(std::span<const std::size_t> locations, std::size_t width) {
  std::vector<double> v(locations.size() * width, 0.0);
  for (std::size_t r = 0; r < locations.size(); ++r) v[r * width + locations[r]] = 1.0;
  return Tensor::from({locations.size(), width}, std::move(v));
}

std::vector<std::size_t> row_argmax(const Tensor& t) {
  const std::size_t rows = t.dim(0), cols = t.dim(1);
  std::vector<std::size_t> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = argmax(t.values().subspan(r * cols, cols));
  return out;
}

AttentionResult select_locations(const Tensor& scores, const Tensor& features,
                                 std::vector<std::size_t> locations) {
  const std::size_t width = scores.dim(1);
  AttentionResult r;
  r.weights = onehot_rows(locations, width);
  {
    NoGradGuard no_grad;
    r.attended = weighted_locations(r.weights, features);
  }
  r.log_prob = gather_cols(log_softmax_rows(scores), locations);
  r.selected = std::move(locations);
  return r;
}

}  // namespace

std::string to_string(AttentionMode mode) {
  switch (mode) {
    case AttentionMode::Soft: return "soft";
    case AttentionMode::Reinforce: return "reinforce";
    case AttentionMode::GumbelConstant: return "gumbel-constant";
    case AttentionMode::GumbelAdaptive: return "gumbel-adaptive";
  }
  return "?";
}

AttentionMode parse_attention_mode(const std::string& name) {
  if (name == "soft") return AttentionMode::Soft;
  if (name == "reinforce") return AttentionMode::Reinforce;
  if (name == "gumbel-constant") return AttentionMode::GumbelConstant;
  if (name == "gumbel-adaptive") return AttentionMode::GumbelAdaptive;
  throw ConfigError("unknown attention mode '" + name +
                    "' (expected soft, reinforce, gumbel-constant or gumbel-adaptive)");
}

bool is_hard(AttentionMode mode) { return mode != AttentionMode::Soft; }

AttentionParams AttentionParams::init(std::size_t hidden, std::size_t locations, bool adaptive, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  auto uniform = [&](std::size_t rows, std::size_t cols) {
    std::vector<double> v(rows * cols);
    for (double& x : v) x = (2.0 * rng.uniform() - 1.0) * bound;
    return Tensor::from({rows, cols}, std::move(v), true);
  };
  AttentionParams p;
  p.location = uniform(hidden, locations);
  if (adaptive) {
    p.temp_w = uniform(hidden, 1);
    p.temp_b = Tensor::zeros({1}, true);
  }
  return p;
}

AttentionResult soft_attend(const Tensor& h1_prev, const Tensor& features, const AttentionParams& params) {
  check_inputs(h1_prev, features, params);
  AttentionResult r;
  r.weights = softmax(matmul(h1_prev, params.location), -1);
  r.attended = weighted_locations(r.weights, features);
  return r;
}

AttentionResult gumbel_hard_attend(const Tensor& h1_prev, const Tensor& features, const AttentionParams& params,
                                   const Temperature& tau, Rng& rng, const AttentionOptions& options) {
  check_inputs(h1_prev, features, params);
  const Tensor scores = matmul(h1_prev, params.location);
  AttentionResult r;
  r.tau = tau.value();
  if (!options.training) {
    r.selected = row_argmax(scores);
    r.weights = onehot_rows(r.selected, scores.dim(1));
    NoGradGuard no_grad;
    r.attended = weighted_locations(r.weights, features);
    return r;
  }
  const GumbelNoise noise = sample_gumbel(scores.shape(), rng);
  const Tensor soft = gumbel_softmax(scores, noise, tau);
  r.selected = row_argmax(soft);
  r.weights = options.discrete == DiscreteMode::Hard ? hard_onehot(soft) : soft;
  r.attended = weighted_locations(r.weights, features);
  return r;
}

AttentionResult reinforce_hard_attend(const Tensor& h1_prev, const Tensor& features,
                                      const AttentionParams& params, Rng& rng, bool training) {
  check_inputs(h1_prev, features, params);
  const Tensor scores = matmul(h1_prev, params.location);
  std::vector<std::size_t> locations;
  if (training) {
    const Tensor alpha = [&] {
      NoGradGuard no_grad;
      return softmax(scores, -1);
    }();
    const std::size_t rows = alpha.dim(0), cols = alpha.dim(1);
    locations.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const double u = rng.uniform();
      double cdf = 0.0;
      std::size_t pick = cols - 1;
      for (std::size_t i = 0; i < cols; ++i) {
        cdf += alpha.values()[r * cols + i];
        if (u < cdf) {
          pick = i;
          break;
        }
      }
      // Never land on a zero-probability tail location through rounding.
      while (pick > 0 && alpha.values()[r * cols + pick] == 0.0) --pick;
      locations[r] = pick;
    }
  } else {
    locations = row_argmax(scores);
  }
  return select_locations(scores, features, std::move(locations));
}

AttentionResult reinforce_select(const Tensor& h1_prev, const Tensor& features, const AttentionParams& params,
                                 std::span<const std::size_t> locations) {
  check_inputs(h1_prev, features, params);
  const Tensor scores = matmul(h1_prev, params.location);
  if (locations.size() != scores.dim(0)) throw DimensionError("reinforce_select: one location per row required");
  for (std::size_t l : locations) {
    if (l >= scores.dim(1)) throw ContractError("reinforce_select: location " + std::to_string(l) + " out of range");
  }
  return select_locations(scores, features, {locations.begin(), locations.end()});
}

Tensor reinforce_grad_terms(const std::vector<Tensor>& log_probs, const Tensor& log_likelihood, double baseline,
                            double lambda) {
  if (log_likelihood.size() != 1) throw ContractError("reinforce_grad_terms: log-likelihood must be a scalar");
  Tensor total = Tensor::scalar(0.0);
  for (const Tensor& lp : log_probs) {
    if (lp.size() != 1) throw ContractError("reinforce_grad_terms: log-probabilities must be scalars");
    total = add(total, reshape(lp, {1}));
  }
  const double reward = log_likelihood.item() - baseline;
  return neg(add(reshape(log_likelihood, {1}), scale(total, lambda * reward)));
}

Tensor reinforce_surrogate(const Tensor& log_prob_sum, const Tensor& log_likelihood, double baseline,
                           double lambda) {
  if (log_prob_sum.shape() != log_likelihood.shape() || log_prob_sum.rank() != 2 || log_prob_sum.dim(1) != 1) {
    throw DimensionError("reinforce_surrogate: expected matching [B x 1] inputs, got " +
                         shape_string(log_prob_sum.shape()) + " and " + shape_string(log_likelihood.shape()));
  }
  std::vector<double> reward(log_likelihood.size());
  for (std::size_t i = 0; i < reward.size(); ++i) reward[i] = lambda * (log_likelihood[i] - baseline);
  const Tensor weighted = mul(log_prob_sum, Tensor::from(log_prob_sum.shape(), std::move(reward)));
  return neg(mean(add(log_likelihood, weighted)));
}

double baseline_update(double previous, double log_likelihood) {
  return 0.9 * previous + 0.1 * log_likelihood;
}

}  // namespace hman
