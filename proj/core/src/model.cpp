#include "hman/model.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "hman/errors.hpp"

namespace hman {

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError("config key '" + key + "': bad integer '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': bad number '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': bad boolean '" + v + "'");
}

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l + 1) + "."; }

Tensor uniform_param(std::size_t rows, std::size_t cols, double bound, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = (2.0 * rng.uniform() - 1.0) * bound;
  return Tensor::from({rows, cols}, std::move(v), true);
}

}  // namespace

// ---------------------------------------------------------------- ModelConfig

void ModelConfig::validate() const {
  if (hidden == 0 || grid == 0 || depth == 0) throw ConfigError("hidden, grid and depth must be positive");
  if (classes < 2) throw ConfigError("at least two classes are required, got " + std::to_string(classes));
  if (layers < 1) throw ConfigError("at least one layer is required");
  if (layers < 2 && !force_boundaries) {
    throw ConfigError("a hierarchy needs at least two layers (one layer is only valid with forced boundaries)");
  }
  if (!(boundary_tau > 0.0 && boundary_tau <= 1.0) || !(attention_tau > 0.0 && attention_tau <= 1.0)) {
    throw ConfigError("temperatures must lie in (0, 1]");
  }
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {
      {"attention", to_string(attention)},
      {"attention_tau", format_double(attention_tau)},
      {"boundary_tau", format_double(boundary_tau)},
      {"classes", std::to_string(classes)},
      {"depth", std::to_string(depth)},
      {"discrete", discrete == DiscreteMode::Hard ? "hard" : "relaxed"},
      {"eval_boundary", eval_boundary == EvalBoundary::NoiseFree ? "noise-free" : "sampled"},
      {"force_boundaries", force_boundaries ? "true" : "false"},
      {"grid", std::to_string(grid)},
      {"hidden", std::to_string(hidden)},
      {"layers", std::to_string(layers)},
      {"literal_eq3", literal_eq3 ? "true" : "false"},
  };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  for (const auto& [k, v] : kv) {
    if (k == "attention") c.attention = parse_attention_mode(v);
    else if (k == "attention_tau") c.attention_tau = parse_double(k, v);
    else if (k == "boundary_tau") c.boundary_tau = parse_double(k, v);
    else if (k == "classes") c.classes = parse_size(k, v);
    else if (k == "depth") c.depth = parse_size(k, v);
    else if (k == "discrete") {
      if (v == "hard") c.discrete = DiscreteMode::Hard;
      else if (v == "relaxed") c.discrete = DiscreteMode::Relaxed;
      else throw ConfigError("config key 'discrete': expected hard or relaxed, got '" + v + "'");
    } else if (k == "eval_boundary") {
      if (v == "noise-free") c.eval_boundary = EvalBoundary::NoiseFree;
      else if (v == "sampled") c.eval_boundary = EvalBoundary::Sampled;
      else throw ConfigError("config key 'eval_boundary': expected noise-free or sampled, got '" + v + "'");
    } else if (k == "force_boundaries") c.force_boundaries = parse_bool(k, v);
    else if (k == "grid") c.grid = parse_size(k, v);
    else if (k == "hidden") c.hidden = parse_size(k, v);
    else if (k == "layers") c.layers = parse_size(k, v);
    else if (k == "literal_eq3") c.literal_eq3 = parse_bool(k, v);
    else throw ConfigError("unknown model config key '" + k + "'");
  }
  c.validate();
  return c;
}

std::string ModelConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + "=" + v + "\n";
  return out;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config line '" + line + "'");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return from_map(kv);
}

// ---------------------------------------------------------------- HmanModel

HmanModel::HmanModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed, 0x1A17);
  const std::size_t h = config_.hidden;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    const std::size_t input = l == 0 ? config_.depth : h;
    std::optional<std::size_t> above;
    if (l + 1 < config_.layers) above = h;
    layers_.push_back(LayerParams::init(input, h, above, rng));
  }
  attention_ = AttentionParams::init(h, config_.locations(), config_.attention == AttentionMode::GumbelAdaptive, rng);
  const std::size_t concat = config_.layers * h;
  out_w_ = uniform_param(concat, config_.classes, 1.0 / std::sqrt(static_cast<double>(concat)), rng);
  out_b_ = Tensor::zeros({config_.classes}, true);
}

std::vector<NamedTensor> HmanModel::parameters() const {
  std::vector<NamedTensor> out;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& p = layers_[l];
    const std::string pre = layer_prefix(l);
    out.push_back({pre + "recurrent", p.recurrent});
    if (p.top_down.defined()) out.push_back({pre + "top_down", p.top_down});
    out.push_back({pre + "bottom_up", p.bottom_up});
    out.push_back({pre + "bias", p.bias});
  }
  out.push_back({"attention.location", attention_.location});
  if (attention_.temp_w.defined()) {
    out.push_back({"attention.temp_w", attention_.temp_w});
    out.push_back({"attention.temp_b", attention_.temp_b});
  }
  out.push_back({"output.weight", out_w_});
  out.push_back({"output.bias", out_b_});
  return out;
}

void HmanModel::load_parameters(const std::vector<NamedTensor>& params) {
  auto mine = parameters();
  if (mine.size() != params.size()) {
    throw ConfigError("parameter count mismatch: model has " + std::to_string(mine.size()) + ", got " +
                      std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < mine.size(); ++i) {
    if (mine[i].name != params[i].name || mine[i].tensor.shape() != params[i].tensor.shape()) {
      throw ConfigError("parameter '" + params[i].name + "' " + shape_string(params[i].tensor.shape()) +
                        " does not match model parameter '" + mine[i].name + "' " +
                        shape_string(mine[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < mine.size(); ++i) {
    auto dst = mine[i].tensor.mutable_values();
    auto src = params[i].tensor.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void HmanModel::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

CellOptions HmanModel::cell_options(Phase phase) const {
  CellOptions o;
  o.training = phase == Phase::Train;
  o.literal_eq3 = config_.literal_eq3;
  o.discrete = config_.discrete;
  o.eval_boundary = config_.eval_boundary;
  o.force_boundary = config_.force_boundaries;
  o.boundary_tau = config_.boundary_tau;
  return o;
}

ForwardResult HmanModel::forward(std::span<const Tensor> clips, Rng& rng, Phase phase) const {
  if (clips.empty()) throw ContractError("forward: empty batch");
  const std::size_t n_loc = config_.locations();
  const std::size_t depth = config_.depth;
  const std::size_t batch = clips.size();
  ForwardResult result;
  std::size_t max_len = 0;
  for (const Tensor& clip : clips) {
    if (clip.rank() != 3 || clip.dim(1) != n_loc || clip.dim(2) != depth) {
      throw ConfigError("clip of shape " + shape_string(clip.shape()) + " does not match model input [T x " +
                        std::to_string(n_loc) + " x " + std::to_string(depth) + "]");
    }
    result.lengths.push_back(clip.dim(0));
    max_len = std::max(max_len, clip.dim(0));
  }

  const CellOptions cell = cell_options(phase);
  const bool training = phase == Phase::Train;
  const std::size_t L = config_.layers;
  std::vector<LayerState> states(L, LayerState::zeros(batch, config_.hidden));
  const Tensor ones = Tensor::full({batch, 1}, 1.0);
  const std::size_t frame = n_loc * depth;
  const bool reinforce = config_.attention == AttentionMode::Reinforce;
  if (reinforce) result.log_prob_sum = Tensor::zeros({batch, 1});

  for (std::size_t t = 0; t < max_len; ++t) {
    std::vector<double> frames(batch * frame, 0.0);
    std::vector<double> valid(batch, 0.0);
    for (std::size_t b = 0; b < batch; ++b) {
      if (t >= result.lengths[b]) continue;
      auto src = clips[b].values().subspan(t * frame, frame);
      std::copy(src.begin(), src.end(), frames.begin() + static_cast<std::ptrdiff_t>(b * frame));
      valid[b] = 1.0;
    }
    const Tensor x_t = Tensor::from({batch, n_loc, depth}, std::move(frames));
    const Tensor& h1_prev = states[0].h;

    StepOutput out;
    switch (config_.attention) {
      case AttentionMode::Soft:
        out.attention = soft_attend(h1_prev, x_t, attention_);
        break;
      case AttentionMode::GumbelConstant:
        out.attention = gumbel_hard_attend(h1_prev, x_t, attention_, Temperature::constant(config_.attention_tau),
                                           rng, {training, config_.discrete});
        break;
      case AttentionMode::GumbelAdaptive:
        out.attention = gumbel_hard_attend(h1_prev, x_t, attention_,
                                           adaptive_tau(h1_prev, attention_.temp_w, attention_.temp_b), rng,
                                           {training, config_.discrete});
        break;
      case AttentionMode::Reinforce:
        out.attention = reinforce_hard_attend(h1_prev, x_t, attention_, rng, training);
        result.log_prob_sum = add(result.log_prob_sum,
                                  mul(out.attention.log_prob, Tensor::from({batch, 1}, valid)));
        break;
    }

    std::vector<LayerState> next(L);
    Tensor below_h = out.attention.attended;
    Tensor below_z = ones;
    for (std::size_t l = 0; l < L; ++l) {
      const Tensor* above = l + 1 < L ? &states[l + 1].h : nullptr;
      next[l] = step(states[l], below_h, below_z, above, layers_[l], cell, rng);
      below_h = next[l].h;
      below_z = next[l].z;
    }
    states = std::move(next);

    std::vector<Tensor> hs;
    for (const auto& s : states) {
      hs.push_back(s.h);
      out.z.push_back(s.z);
      out.h.push_back(s.h);
    }
    const Tensor concat = L == 1 ? hs[0] : concat_cols(hs);
    out.probs = softmax(add_bias(matmul(concat, out_w_), out_b_), -1);
    result.steps.push_back(std::move(out));
  }
  return result;
}

ForwardResult HmanModel::forward_sequence(const Tensor& clip, Rng& rng, Phase phase) const {
  return forward(std::span<const Tensor>(&clip, 1), rng, phase);
}

Prediction HmanModel::predict_video(std::span<const Tensor> blocks) const {
  if (blocks.empty()) throw ContractError("predict_video: no frame blocks");
  NoGradGuard no_grad;
  Rng rng(0);
  const ForwardResult r = forward(blocks, rng, Phase::Eval);
  const auto per_block = mean_step_probs(r);
  Prediction p;
  p.probs.assign(config_.classes, 0.0);
  for (const auto& probs : per_block)
    for (std::size_t c = 0; c < probs.size(); ++c) p.probs[c] += probs[c];
  for (double& v : p.probs) v /= static_cast<double>(per_block.size());
  p.label = argmax(p.probs);
  return p;
}

// ---------------------------------------------------------------- losses and summaries

LossTerms sequence_loss(const ForwardResult& result, std::span<const std::size_t> labels) {
  const std::size_t batch = result.batch();
  if (labels.size() != batch) throw ContractError("sequence_loss: one label per row required");
  if (result.steps.empty()) throw ContractError("sequence_loss: no steps");
  const std::size_t classes = result.steps[0].probs.dim(1);
  for (std::size_t y : labels) {
    if (y >= classes) throw ContractError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
  }
  Tensor ll = Tensor::zeros({batch, 1});
  for (std::size_t t = 0; t < result.steps.size(); ++t) {
    const Tensor lp = log_clamped(gather_cols(result.steps[t].probs, labels), kLogFloor);
    bool all_valid = true;
    std::vector<double> mask(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      mask[b] = t < result.lengths[b] ? 1.0 : 0.0;
      all_valid = all_valid && mask[b] == 1.0;
    }
    ll = add(ll, all_valid ? lp : mul(lp, Tensor::from({batch, 1}, std::move(mask))));
  }
  return {neg(mean(ll)), ll};
}

Tensor sequence_loss(const std::vector<StepOutput>& outputs, std::size_t label) {
  ForwardResult r;
  r.steps = outputs;
  r.lengths = {outputs.size()};
  const std::size_t labels[] = {label};
  return sequence_loss(r, labels).loss;
}

std::vector<std::vector<double>> mean_step_probs(const ForwardResult& result) {
  const std::size_t batch = result.batch();
  const std::size_t classes = result.steps.at(0).probs.dim(1);
  std::vector<std::vector<double>> out(batch, std::vector<double>(classes, 0.0));
  for (std::size_t t = 0; t < result.steps.size(); ++t) {
    auto p = result.steps[t].probs.values();
    for (std::size_t b = 0; b < batch; ++b) {
      if (t >= result.lengths[b]) continue;
      for (std::size_t c = 0; c < classes; ++c) out[b][c] += p[b * classes + c];
    }
  }
  for (std::size_t b = 0; b < batch; ++b)
    for (double& v : out[b]) v /= static_cast<double>(result.lengths[b]);
  return out;
}

std::vector<std::vector<int>> boundary_raster(const ForwardResult& result, std::size_t row) {
  if (row >= result.batch()) throw ContractError("boundary_raster: row out of range");
  const std::size_t layers = result.steps.at(0).z.size();
  std::vector<std::vector<int>> raster(layers);
  for (std::size_t t = 0; t < result.lengths[row]; ++t)
    for (std::size_t l = 0; l < layers; ++l) raster[l].push_back(result.steps[t].z[l][row] >= 0.5 ? 1 : 0);
  return raster;
}

double OperationStats::write_rate(std::size_t layer) const {
  const double total = static_cast<double>(update[layer] + copy[layer] + flush[layer]);
  return total > 0 ? static_cast<double>(update[layer] + flush[layer]) / total : 0.0;
}

double OperationStats::update_rate(std::size_t layer) const {
  const double total = static_cast<double>(update[layer] + copy[layer] + flush[layer]);
  return total > 0 ? static_cast<double>(update[layer]) / total : 0.0;
}

void OperationStats::merge(const OperationStats& other) {
  if (update.empty()) {
    *this = other;
    return;
  }
  for (std::size_t l = 0; l < update.size(); ++l) {
    update[l] += other.update[l];
    copy[l] += other.copy[l];
    flush[l] += other.flush[l];
  }
}

OperationStats operation_stats(const ForwardResult& result) {
  OperationStats s;
  if (result.steps.empty()) return s;
  const std::size_t layers = result.steps[0].z.size();
  s.update.assign(layers, 0);
  s.copy.assign(layers, 0);
  s.flush.assign(layers, 0);
  for (std::size_t b = 0; b < result.batch(); ++b) {
    for (std::size_t t = 0; t < result.lengths[b]; ++t) {
      for (std::size_t l = 0; l < layers; ++l) {
        const double z_prev = t == 0 ? 0.0 : (result.steps[t - 1].z[l][b] >= 0.5 ? 1.0 : 0.0);
        const double z_below = l == 0 ? 1.0 : (result.steps[t].z[l - 1][b] >= 0.5 ? 1.0 : 0.0);
        switch (select_operation(z_prev, z_below)) {
          case CellOp::Update: ++s.update[l]; break;
          case CellOp::Copy: ++s.copy[l]; break;
          case CellOp::Flush: ++s.flush[l]; break;
        }
      }
    }
  }
  return s;
}

}  // namespace hman
