#pragma once

// The full network: per-step spatial attention feeding a stack of HM-RNN
// layers whose concatenated hidden states drive a per-step class softmax.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "hman/attention.hpp"
#include "hman/hmrnn_cell.hpp"
#include "hman/rng.hpp"
#include "hman/tensor.hpp"

namespace hman {

inline constexpr double kLogFloor = 1e-12;

struct ModelConfig {
  std::size_t layers = 3;
  std::size_t hidden = 128;
  std::size_t grid = 7;  // K; the frame holds K*K locations
  std::size_t depth = 2048;  // D, feature length per location
  std::size_t classes = 2;
  AttentionMode attention = AttentionMode::Soft;
  bool literal_eq3 = false;
  EvalBoundary eval_boundary = EvalBoundary::NoiseFree;
  // Boundary detectors held at 1: with one layer this is the LSTM-style baseline.
  bool force_boundaries = false;
  double boundary_tau = kBoundaryTemperature;
  double attention_tau = kHardAttentionTemperature;
  DiscreteMode discrete = DiscreteMode::Hard;

  std::size_t locations() const { return grid * grid; }
  // Throws ConfigError on invalid combinations.
  void validate() const;

  // "key=value" lines, stable key order.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

enum class Phase { Train, Eval };

struct StepOutput {
  Tensor probs;  // [B x C]
  AttentionResult attention;
  std::vector<Tensor> z;  // per layer, [B x 1]
  std::vector<Tensor> h;  // per layer, [B x hidden]
};

struct ForwardResult {
  std::vector<StepOutput> steps;
  std::vector<std::size_t> lengths;  // valid steps per row
  Tensor log_prob_sum;  // reinforce only: [B x 1] sum of log alpha over valid steps

  std::size_t batch() const { return lengths.size(); }
};

struct LossTerms {
  Tensor loss;  // scalar: mean over rows of the summed per-step cross-entropy
  Tensor log_likelihood;  // [B x 1]: sum over valid steps of log p(label)
};

struct Prediction {
  std::size_t label = 0;
  std::vector<double> probs;
};

class HmanModel {
 public:
  explicit HmanModel(const ModelConfig& config, std::uint64_t seed = 0);

  const ModelConfig& config() const { return config_; }

  // Handles share storage with the model; mutate values to update parameters.
  std::vector<NamedTensor> parameters() const;
  // Replaces every parameter's values; names and shapes must match exactly.
  void load_parameters(const std::vector<NamedTensor>& params);
  void zero_grad();

  // Each clip is [T_b x K^2 x D]. Rows shorter than the longest clip are
  // zero-padded; their padded steps are excluded from losses and averages.
  ForwardResult forward(std::span<const Tensor> clips, Rng& rng, Phase phase) const;
  ForwardResult forward_sequence(const Tensor& clip, Rng& rng, Phase phase) const;

  // Averages per-step class probabilities within each block, then across
  // blocks. Runs in deterministic evaluation mode without recording a tape.
  Prediction predict_video(std::span<const Tensor> blocks) const;

  const std::vector<LayerParams>& layers() const { return layers_; }
  const AttentionParams& attention() const { return attention_; }
  const Tensor& output_weight() const { return out_w_; }
  const Tensor& output_bias() const { return out_b_; }

 private:
  CellOptions cell_options(Phase phase) const;

  ModelConfig config_;
  std::vector<LayerParams> layers_;
  AttentionParams attention_;
  Tensor out_w_;  // [L*hidden x C]
  Tensor out_b_;  // [C]
};

// Cross-entropy summed over valid steps, with the same label at every step.
LossTerms sequence_loss(const ForwardResult& result, std::span<const std::size_t> labels);
Tensor sequence_loss(const std::vector<StepOutput>& outputs, std::size_t label);

// Mean of the per-step probabilities over each row's valid steps.
std::vector<std::vector<double>> mean_step_probs(const ForwardResult& result);

// Binary boundary raster of one row: raster[layer][t].
std::vector<std::vector<int>> boundary_raster(const ForwardResult& result, std::size_t row);

// Operation counts per layer over all rows' valid steps.
struct OperationStats {
  std::vector<std::size_t> update, copy, flush;

  // Share of steps where the layer was recomputed (UPDATE or FLUSH).
  double write_rate(std::size_t layer) const;
  // Share of steps that were strictly UPDATE.
  double update_rate(std::size_t layer) const;
  void merge(const OperationStats& other);
};
OperationStats operation_stats(const ForwardResult& result);

}  // namespace hman
