#include "hman/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "hman/errors.hpp"

namespace hman {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("train config key '" + key + "': bad integer '" + v + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw ConfigError("train config key '" + key + "': bad number '" + v + "'");
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

}  // namespace

std::string to_string(FrameSampling s) { return s == FrameSampling::Window ? "window" : "random"; }

FrameSampling parse_frame_sampling(const std::string& s) {
  if (s == "window") return FrameSampling::Window;
  if (s == "random") return FrameSampling::Random;
  throw ConfigError("unknown frame sampling '" + s + "' (expected window or random)");
}

// ---------------------------------------------------------------- TrainConfig

void TrainConfig::validate() const {
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (steps == 0) throw ConfigError("steps per clip must be positive");
  if (!(lr > 0) || !(lr_late > 0)) throw ConfigError("learning rates must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(eps > 0)) throw ConfigError("Adam epsilon must be positive");
  if (!(clip_norm > 0)) throw ConfigError("gradient clip norm must be positive");
  if (!(lambda >= 0) || !std::isfinite(lambda)) throw ConfigError("lambda must be a finite non-negative value");
  if (mc_samples == 0) throw ConfigError("mc_samples must be positive");
}

double TrainConfig::lr_at(std::uint64_t iteration) const { return iteration <= lr_drop_after ? lr : lr_late; }

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {
      {"batch", std::to_string(batch)},
      {"beta1", fmt(beta1)},
      {"beta2", fmt(beta2)},
      {"clip_norm", fmt(clip_norm)},
      {"epochs", std::to_string(epochs)},
      {"eps", fmt(eps)},
      {"lambda", fmt(lambda)},
      {"lr", fmt(lr)},
      {"lr_drop_after", std::to_string(lr_drop_after)},
      {"lr_late", fmt(lr_late)},
      {"mc_samples", std::to_string(mc_samples)},
      {"sampling", to_string(sampling)},
      {"seed", std::to_string(seed)},
      {"steps", std::to_string(steps)},
  };
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "batch") c.batch = parse_u64(k, v);
    else if (k == "beta1") c.beta1 = parse_real(k, v);
    else if (k == "beta2") c.beta2 = parse_real(k, v);
    else if (k == "clip_norm") c.clip_norm = parse_real(k, v);
    else if (k == "epochs") c.epochs = parse_u64(k, v);
    else if (k == "eps") c.eps = parse_real(k, v);
    else if (k == "lambda") c.lambda = parse_real(k, v);
    else if (k == "lr") c.lr = parse_real(k, v);
    else if (k == "lr_drop_after") c.lr_drop_after = parse_u64(k, v);
    else if (k == "lr_late") c.lr_late = parse_real(k, v);
    else if (k == "mc_samples") c.mc_samples = parse_u64(k, v);
    else if (k == "sampling") c.sampling = parse_frame_sampling(v);
    else if (k == "seed") c.seed = parse_u64(k, v);
    else if (k == "steps") c.steps = parse_u64(k, v);
    else throw ConfigError("unknown train config key '" + k + "'");
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------- Adam

Adam::Adam(const std::vector<NamedTensor>& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params) {
    names_.push_back(p.name);
    m_.emplace_back(p.tensor.size(), 0.0);
    v_.emplace_back(p.tensor.size(), 0.0);
  }
}

void Adam::step(const std::vector<NamedTensor>& params, double lr, std::uint64_t t) {
  if (params.size() != names_.size()) throw ContractError("Adam::step: parameter list changed");
  if (t == 0) throw ContractError("Adam::step: step count is 1-based");
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor w = params[i].tensor;
    const std::vector<double> g = w.grad();
    auto values = w.mutable_values();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double m_hat = m[j] / c1;
      const double v_hat = v[j] / c2;
      values[j] -= lr * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

std::vector<NamedTensor> Adam::moments() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const Shape shape{m_[i].size()};
    out.push_back({"m:" + names_[i], Tensor::from(shape, m_[i])});
    out.push_back({"v:" + names_[i], Tensor::from(shape, v_[i])});
  }
  return out;
}

void Adam::load_moments(const std::vector<NamedTensor>& moments) {
  if (moments.size() != 2 * names_.size()) throw ConfigError("optimizer state does not match the model");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto& m = moments[2 * i];
    const auto& v = moments[2 * i + 1];
    if (m.name != "m:" + names_[i] || v.name != "v:" + names_[i] || m.tensor.size() != m_[i].size() ||
        v.tensor.size() != v_[i].size()) {
      throw ConfigError("optimizer state entry '" + m.name + "' does not match parameter '" + names_[i] + "'");
    }
    m_[i].assign(m.tensor.values().begin(), m.tensor.values().end());
    v_[i].assign(v.tensor.values().begin(), v.tensor.values().end());
  }
}

double clip_grad_norm(const std::vector<NamedTensor>& params, double clip) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > clip) {
    const double s = clip / norm;
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      Tensor t = p.tensor;
      for (double& g : t.mutable_grad()) g *= s;
    }
  }
  return norm;
}

// ---------------------------------------------------------------- frames

Tensor sample_frames(const Tensor& clip, std::size_t steps, FrameSampling mode, Rng& rng) {
  const std::size_t total = clip.dim(0);
  if (total <= steps) return clip;
  const std::size_t frame = clip.dim(1) * clip.dim(2);
  std::vector<std::size_t> picks;
  if (mode == FrameSampling::Window) {
    const std::size_t start = rng.index(total - steps + 1);
    for (std::size_t i = 0; i < steps; ++i) picks.push_back(start + i);
  } else {
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t i = 0; i < steps; ++i) std::swap(all[i], all[i + rng.index(total - i)]);
    picks.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(steps));
    std::sort(picks.begin(), picks.end());
  }
  std::vector<double> out;
  out.reserve(steps * frame);
  const auto src = clip.values();
  for (std::size_t t : picks) out.insert(out.end(), src.begin() + t * frame, src.begin() + (t + 1) * frame);
  return Tensor::from({steps, clip.dim(1), clip.dim(2)}, std::move(out));
}

std::vector<Tensor> split_blocks(const Tensor& clip, std::size_t steps) {
  if (steps == 0) throw ContractError("split_blocks: block length must be positive");
  const std::size_t total = clip.dim(0);
  const std::size_t frame = clip.dim(1) * clip.dim(2);
  const auto src = clip.values();
  std::vector<Tensor> blocks;
  for (std::size_t start = 0; start < total; start += steps) {
    const std::size_t len = std::min(steps, total - start);
    std::vector<double> v(src.begin() + start * frame, src.begin() + (start + len) * frame);
    blocks.push_back(Tensor::from({len, clip.dim(1), clip.dim(2)}, std::move(v)));
  }
  return blocks;
}

// ---------------------------------------------------------------- metrics CSV

std::string metrics_csv_header(std::size_t layers) {
  std::string h = "epoch,iteration,loss,accuracy,lr";
  for (std::size_t l = 0; l < layers; ++l) h += ",update_rate_l" + std::to_string(l + 1);
  return h + ",baseline\n";
}

std::string metrics_csv_row(const EpochMetrics& m) {
  std::string r = std::to_string(m.epoch) + "," + std::to_string(m.iteration) + "," + fmt(m.loss) + "," +
                  fmt(m.accuracy) + "," + fmt(m.lr);
  for (double u : m.update_rates) r += "," + fmt(u);
  return r + "," + fmt(m.baseline) + "\n";
}

// ---------------------------------------------------------------- Trainer

Trainer::Trainer(HmanModel& model, const TrainConfig& config)
    : model_(model),
      config_(config),
      params_(model.parameters()),
      adam_(params_, config.beta1, config.beta2, config.eps) {
  config_.validate();
}

Trainer::BatchResult Trainer::update(std::span<const Tensor> clips, std::span<const std::size_t> labels, Rng& rng) {
  const bool reinforce = model_.config().attention == AttentionMode::Reinforce;
  std::vector<Tensor> rows(clips.begin(), clips.end());
  std::vector<std::size_t> row_labels(labels.begin(), labels.end());
  if (reinforce && config_.mc_samples > 1) {
    for (std::size_t s = 1; s < config_.mc_samples; ++s) {
      rows.insert(rows.end(), clips.begin(), clips.end());
      row_labels.insert(row_labels.end(), labels.begin(), labels.end());
    }
  }

  ++iteration_;
  model_.zero_grad();
  const ForwardResult fwd = model_.forward(rows, rng, Phase::Train);
  const LossTerms terms = sequence_loss(fwd, row_labels);
  double mean_ll = 0.0;
  for (double v : terms.log_likelihood.values()) mean_ll += v;
  mean_ll /= static_cast<double>(rows.size());

  Tensor objective = terms.loss;
  if (reinforce) objective = reinforce_surrogate(fwd.log_prob_sum, terms.log_likelihood, baseline_, config_.lambda);
  objective.backward();
  clip_grad_norm(params_, config_.clip_norm);
  adam_.step(params_, config_.lr_at(iteration_), iteration_);
  if (reinforce) baseline_ = baseline_update(baseline_, mean_ll);

  if (model_.config().attention == AttentionMode::GumbelAdaptive) {
    for (std::size_t t = 0; t < fwd.steps.size(); ++t) {
      const auto tau = fwd.steps[t].attention.tau.values();
      TauRecord rec{iteration_, t, tau[0], 0.0, tau[0]};
      for (double v : tau) {
        rec.min = std::min(rec.min, v);
        rec.max = std::max(rec.max, v);
        rec.mean += v;
      }
      rec.mean /= static_cast<double>(tau.size());
      tau_log_.push_back(rec);
    }
  }

  BatchResult out;
  out.loss = terms.loss.item();
  const auto probs = mean_step_probs(fwd);
  for (std::size_t b = 0; b < clips.size(); ++b) out.correct += argmax(probs[b]) == labels[b] ? 1 : 0;
  out.ops = operation_stats(fwd);
  return out;
}

double Trainer::train_batch(std::span<const Tensor> clips, std::span<const std::size_t> labels) {
  Rng rng(config_.seed, 0x7000000000000000ULL + iteration_);
  return update(clips, labels, rng).loss;
}

EpochMetrics Trainer::train_epoch(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw ContractError("train_epoch: no training samples");
  ++epoch_;
  Rng order_rng(config_.seed, 0x5000000000000000ULL + epoch_);
  std::vector<std::size_t> order(indices.begin(), indices.end());
  shuffle(order, order_rng);

  double loss_sum = 0.0;
  std::size_t correct = 0, batches = 0;
  OperationStats ops;
  for (std::size_t start = 0; start < order.size(); start += config_.batch) {
    const std::size_t end = std::min(order.size(), start + config_.batch);
    Rng rng(config_.seed, 0x7000000000000000ULL + iteration_);
    std::vector<Tensor> clips;
    std::vector<std::size_t> labels;
    for (std::size_t i = start; i < end; ++i) {
      const VideoSample& s = data.samples.at(order[i]);
      clips.push_back(sample_frames(s.features, config_.steps, config_.sampling, rng));
      labels.push_back(s.label);
    }
    const BatchResult r = update(clips, labels, rng);
    loss_sum += r.loss;
    correct += r.correct;
    ops.merge(r.ops);
    ++batches;
  }

  EpochMetrics m;
  m.epoch = epoch_;
  m.iteration = iteration_;
  m.loss = loss_sum / static_cast<double>(batches);
  m.accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
  m.lr = config_.lr_at(iteration_);
  for (std::size_t l = 0; l < ops.update.size(); ++l) {
    m.update_rates.push_back(ops.write_rate(l));
    m.strict_update_rates.push_back(ops.update_rate(l));
  }
  m.baseline = baseline_;
  return m;
}

TrainerState Trainer::state() const {
  TrainerState s;
  s.iteration = iteration_;
  s.epoch = epoch_;
  s.baseline = baseline_;
  s.moments = adam_.moments();
  return s;
}

void Trainer::restore(const TrainerState& state) {
  adam_.load_moments(state.moments);
  iteration_ = state.iteration;
  epoch_ = state.epoch;
  baseline_ = state.baseline;
}

// ---------------------------------------------------------------- evaluation

double EvalReport::accuracy() const {
  if (labels.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) ok += labels[i] == predicted[i] ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(labels.size());
}

EvalReport evaluate(const HmanModel& model, const Dataset& data, std::span<const std::size_t> indices,
                    std::size_t steps, std::size_t batch) {
  NoGradGuard no_grad;
  const std::size_t classes = model.config().classes;
  EvalReport report;
  struct BlockRef {
    std::size_t video;
    Tensor block;
  };
  std::vector<BlockRef> blocks;
  std::vector<std::size_t> block_count(indices.size(), 0);
  for (std::size_t v = 0; v < indices.size(); ++v) {
    const VideoSample& s = data.samples.at(indices[v]);
    if (s.label >= classes) throw ConfigError("sample '" + s.id + "' label exceeds the model's class count");
    for (Tensor& b : split_blocks(s.features, steps)) blocks.push_back({v, std::move(b)});
    report.labels.push_back(s.label);
  }
  report.probs.assign(indices.size(), std::vector<double>(classes, 0.0));
  Rng rng(0);
  for (std::size_t start = 0; start < blocks.size(); start += batch) {
    const std::size_t end = std::min(blocks.size(), start + batch);
    std::vector<Tensor> clips;
    for (std::size_t i = start; i < end; ++i) clips.push_back(blocks[i].block);
    const ForwardResult r = model.forward(clips, rng, Phase::Eval);
    report.ops.merge(operation_stats(r));
    const auto means = mean_step_probs(r);
    for (std::size_t i = start; i < end; ++i) {
      auto& acc = report.probs[blocks[i].video];
      for (std::size_t c = 0; c < classes; ++c) acc[c] += means[i - start][c];
      ++block_count[blocks[i].video];
    }
  }
  for (std::size_t v = 0; v < indices.size(); ++v) {
    for (double& p : report.probs[v]) p /= static_cast<double>(block_count[v]);
    report.predicted.push_back(argmax(report.probs[v]));
  }
  return report;
}

}  // namespace hman
