#include "hman/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "hman/attention.hpp"
#include "hman/hmrnn_cell.hpp"
#include "hman/model.hpp"
#include "hman/rng.hpp"
#include "hman/stochastic.hpp"

namespace hman {

namespace {

Tensor random_leaf(const Shape& shape, Rng& rng, double scale = 1.0, double offset = 0.0) {
  std::vector<double> v(shape_size(shape));
  for (double& x : v) x = offset + scale * rng.normal();
  return Tensor::from(shape, std::move(v), true);
}

// Fixed weighting so that every output element contributes to the loss.
Tensor weighted_sum(const Tensor& t, std::uint64_t salt) {
  Rng rng(salt, 0xFEED);
  std::vector<double> w(t.size());
  for (double& x : w) x = rng.uniform() + 0.5;
  return sum(mul(t, Tensor::from(t.shape(), std::move(w))));
}

GradCheckCase cell_case(const std::string& name, double z_prev, double z_below) {
  GradCheckCase c;
  c.name = name;
  c.make_inputs = [](std::uint64_t seed) {
    Rng rng(seed, 11);
    LayerParams p = LayerParams::init(3, 4, 4, rng);
    return std::vector<Tensor>{p.recurrent, p.top_down, p.bottom_up, p.bias, random_leaf({2, 4}, rng, 0.5),
                               random_leaf({2, 4}, rng, 0.5), random_leaf({2, 3}, rng), random_leaf({2, 4}, rng, 0.5)};
  };
  c.loss = [z_prev, z_below](const std::vector<Tensor>& in, std::uint64_t seed) {
    LayerParams p;
    p.input = 3;
    p.hidden = 4;
    p.recurrent = in[0];
    p.top_down = in[1];
    p.bottom_up = in[2];
    p.bias = in[3];
    LayerState prev{in[4], in[5], Tensor::full({2, 1}, z_prev)};
    Rng rng(seed, 12);
    CellOptions o;
    const LayerState next = step(prev, in[6], Tensor::full({2, 1}, z_below), &in[7], p, o, rng);
    return add(weighted_sum(next.c, 1), weighted_sum(next.h, 2));
  };
  return c;
}

// The surrogate's reward factor is a graph constant, so its gradient is
// compared with differences of -[ll + lambda * r0 * log_prob] where r0 is the
// reward at the unperturbed inputs.
GradCheckCase reinforce_case() {
  struct Frozen {
    bool analytic = true;
    std::vector<double> reward;
  };
  auto frozen = std::make_shared<Frozen>();
  constexpr double kBaseline = -0.4;
  constexpr double kLambda = 1.0;
  GradCheckCase c;
  c.name = "reinforce_surrogate";
  c.make_inputs = [frozen](std::uint64_t seed) {
    frozen->analytic = true;
    Rng rng(seed, 15);
    return std::vector<Tensor>{random_leaf({2, 3}, rng), random_leaf({3, 4}, rng)};
  };
  c.loss = [frozen](const std::vector<Tensor>& in, std::uint64_t seed) {
    Rng rng(seed, 16);
    const Tensor features = random_leaf({2, 4, 2}, rng).detach();
    AttentionParams p;
    p.location = in[1];
    const std::size_t picks[] = {1, 3};
    const AttentionResult r = reinforce_select(in[0], features, p, picks);
    const Tensor ll = neg(softplus(matmul(in[0], Tensor::full({3, 1}, 0.3))));
    if (frozen->analytic) {
      frozen->analytic = false;
      frozen->reward = {ll[0] - kBaseline, ll[1] - kBaseline};
      return reinforce_surrogate(r.log_prob, ll, kBaseline, kLambda);
    }
    const Tensor reward = Tensor::from({2, 1}, frozen->reward);
    return neg(mean(add(ll, scale(mul(reward, r.log_prob), kLambda))));
  };
  return c;
}

GradCheckCase model_case(const std::string& name, AttentionMode mode) {
  GradCheckCase c;
  c.name = name;
  auto config = [mode] {
    ModelConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 4;
    cfg.grid = 2;
    cfg.depth = 3;
    cfg.classes = 2;
    cfg.attention = mode;
    cfg.discrete = DiscreteMode::Relaxed;
    return cfg;
  };
  auto model = std::make_shared<std::unique_ptr<HmanModel>>();
  c.make_inputs = [config, model](std::uint64_t seed) {
    *model = std::make_unique<HmanModel>(config(), seed);
    std::vector<Tensor> in;
    for (const auto& p : (*model)->parameters()) in.push_back(p.tensor);
    return in;
  };
  // The inputs are the model's own parameter handles.
  c.loss = [model](const std::vector<Tensor>&, std::uint64_t seed) {
    Rng data_rng(seed, 21);
    const Tensor clip = random_leaf({3, 4, 3}, data_rng).detach();
    Rng rng(seed, 22);
    const ForwardResult r = (*model)->forward_sequence(clip, rng, Phase::Train);
    const std::size_t labels[] = {1};
    return sequence_loss(r, labels).loss;
  };
  return c;
}

}  // namespace

GradCheckResult check_gradients(const GradCheckCase& c, const GradCheckOptions& options) {
  GradCheckResult res;
  res.name = c.name;
  std::vector<Tensor> inputs = c.make_inputs(options.noise_seed);
  Tensor loss = c.loss(inputs, options.noise_seed);
  loss.backward();
  std::vector<std::vector<double>> analytic;
  for (const Tensor& t : inputs) analytic.push_back(t.grad());
  if (options.corrupt && !analytic.empty() && !analytic[0].empty()) analytic[0][0] += 1e-2 + std::abs(analytic[0][0]);

  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].mutable_values();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double orig = values[j];
      values[j] = orig + options.step;
      const double up = c.loss(inputs, options.noise_seed).item();
      values[j] = orig - options.step;
      const double down = c.loss(inputs, options.noise_seed).item();
      values[j] = orig;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[k][j];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), options.floor});
      res.max_abs_error = std::max(res.max_abs_error, abs_err);
      res.max_rel_error = std::max(res.max_rel_error, rel);
      ++res.elements;
    }
  }
  res.passed = res.max_rel_error < options.tolerance;
  return res;
}

std::vector<GradCheckCase> default_grad_checks() {
  std::vector<GradCheckCase> cases;

  cases.push_back({"matmul",
                   [](std::uint64_t seed) {
                     Rng rng(seed, 1);
                     return std::vector<Tensor>{random_leaf({4, 3}, rng), random_leaf({3, 5}, rng)};
                   },
                   [](const std::vector<Tensor>& in, std::uint64_t) { return weighted_sum(matmul(in[0], in[1]), 3); }});

  cases.push_back({"elementwise",
                   [](std::uint64_t seed) {
                     Rng rng(seed, 2);
                     return std::vector<Tensor>{random_leaf({3, 4}, rng), random_leaf({3, 4}, rng, 0.2, 2.0)};
                   },
                   [](const std::vector<Tensor>& in, std::uint64_t) {
                     const Tensor& a = in[0];
                     const Tensor& b = in[1];
                     Tensor t = add(sigmoid(a), tanh(mul(a, b)));
                     t = add(t, softplus(sub(a, b)));
                     t = add(t, div(exp(scale(a, 0.5)), b));
                     t = add(t, log(b));
                     t = add(t, relu(add_scalar(b, -1.0)));
                     return weighted_sum(t, 4);
                   }});

  cases.push_back({"softmax",
                   [](std::uint64_t seed) {
                     Rng rng(seed, 3);
                     return std::vector<Tensor>{random_leaf({3, 5}, rng, 2.0)};
                   },
                   [](const std::vector<Tensor>& in, std::uint64_t) {
                     return add(weighted_sum(softmax(in[0], -1), 5),
                                add(weighted_sum(softmax(in[0], 0), 6), weighted_sum(log_softmax_rows(in[0]), 7)));
                   }});

  cases.push_back({"soft_attention",
                   [](std::uint64_t seed) {
                     Rng rng(seed, 4);
                     return std::vector<Tensor>{random_leaf({2, 3}, rng), random_leaf({3, 4}, rng),
                                                random_leaf({2, 4, 5}, rng)};
                   },
                   [](const std::vector<Tensor>& in, std::uint64_t) {
                     AttentionParams p;
                     p.location = in[1];
                     const AttentionResult r = soft_attend(in[0], in[2], p);
                     return add(weighted_sum(r.attended, 8), weighted_sum(r.weights, 9));
                   }});

  cases.push_back({"gumbel_softmax",
                   [](std::uint64_t seed) {
                     Rng rng(seed, 5);
                     return std::vector<Tensor>{random_leaf({3, 4}, rng)};
                   },
                   [](const std::vector<Tensor>& in, std::uint64_t seed) {
                     Rng rng(seed, 6);
                     const GumbelNoise g = sample_gumbel({3, 4}, rng);
                     return weighted_sum(gumbel_softmax(in[0], g, Temperature::constant(0.5)), 10);
                   }});

  cases.push_back({"gumbel_softmax_adaptive",
                   [](std::uint64_t seed) {
                     Rng rng(seed, 7);
                     return std::vector<Tensor>{random_leaf({3, 4}, rng), random_leaf({3, 2}, rng),
                                                random_leaf({2, 1}, rng), random_leaf({1}, rng)};
                   },
                   [](const std::vector<Tensor>& in, std::uint64_t seed) {
                     Rng rng(seed, 8);
                     const GumbelNoise g = sample_gumbel({3, 4}, rng);
                     return weighted_sum(gumbel_softmax(in[0], g, adaptive_tau(in[1], in[2], in[3])), 11);
                   }});

  cases.push_back({"gumbel_sigmoid",
                   [](std::uint64_t seed) {
                     Rng rng(seed, 9);
                     return std::vector<Tensor>{random_leaf({4, 1}, rng)};
                   },
                   [](const std::vector<Tensor>& in, std::uint64_t seed) {
                     Rng rng(seed, 10);
                     const GumbelNoise a = sample_gumbel({4, 1}, rng);
                     const GumbelNoise b = sample_gumbel({4, 1}, rng);
                     return weighted_sum(gumbel_sigmoid(in[0], a, b, Temperature::constant(0.3)), 12);
                   }});

  cases.push_back({"adaptive_tau",
                   [](std::uint64_t seed) {
                     Rng rng(seed, 13);
                     return std::vector<Tensor>{random_leaf({3, 4}, rng), random_leaf({4, 1}, rng),
                                                random_leaf({1}, rng)};
                   },
                   [](const std::vector<Tensor>& in, std::uint64_t) {
                     return weighted_sum(adaptive_tau(in[0], in[1], in[2]).value(), 14);
                   }});

  cases.push_back(reinforce_case());

  cases.push_back(cell_case("cell_update", 0.0, 1.0));
  cases.push_back(cell_case("cell_copy", 0.0, 0.0));
  cases.push_back(cell_case("cell_flush", 1.0, 1.0));

  cases.push_back({"cell_two_steps_relaxed",
                   [](std::uint64_t seed) {
                     Rng rng(seed, 17);
                     LayerParams p = LayerParams::init(3, 4, std::nullopt, rng);
                     return std::vector<Tensor>{p.recurrent, p.bottom_up, p.bias, random_leaf({2, 3}, rng),
                                                random_leaf({2, 3}, rng)};
                   },
                   [](const std::vector<Tensor>& in, std::uint64_t seed) {
                     LayerParams p;
                     p.input = 3;
                     p.hidden = 4;
                     p.recurrent = in[0];
                     p.bottom_up = in[1];
                     p.bias = in[2];
                     CellOptions o;
                     o.discrete = DiscreteMode::Relaxed;
                     Rng rng(seed, 18);
                     const Tensor ones = Tensor::full({2, 1}, 1.0);
                     LayerState s = LayerState::zeros(2, 4);
                     s = step(s, in[3], ones, nullptr, p, o, rng);
                     s = step(s, in[4], ones, nullptr, p, o, rng);
                     return add(weighted_sum(s.h, 19), add(weighted_sum(s.c, 20), weighted_sum(s.z, 21)));
                   }});

  cases.push_back(model_case("model_soft", AttentionMode::Soft));
  cases.push_back(model_case("model_gumbel_adaptive", AttentionMode::GumbelAdaptive));
  return cases;
}

std::vector<GradCheckResult> run_grad_checks(const GradCheckOptions& options) {
  std::vector<GradCheckResult> out;
  for (const auto& c : default_grad_checks()) out.push_back(check_gradients(c, options));
  return out;
}

}  // namespace hman
