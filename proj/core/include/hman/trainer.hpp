#pragma once

// Mini-batch BPTT training with Adam, global-norm clipping, a step learning
// rate schedule and, for REINFORCE attention, a moving-average baseline.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hman/checkpoint.hpp"
#include "hman/data_io.hpp"
#include "hman/model.hpp"
#include "hman/rng.hpp"

namespace hman {

enum class FrameSampling { Window, Random };
std::string to_string(FrameSampling s);
FrameSampling parse_frame_sampling(const std::string& s);

struct TrainConfig {
  std::size_t batch = 64;
  std::size_t steps = 60;  // frames per training clip
  double lr = 1e-4;
  double lr_late = 1e-5;
  std::uint64_t lr_drop_after = 10000;  // iterations at the initial rate
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double lambda = 1.0;
  std::uint64_t seed = 0;
  std::size_t epochs = 30;
  double clip_norm = 5.0;
  FrameSampling sampling = FrameSampling::Window;
  std::size_t mc_samples = 1;  // REINFORCE samples per clip

  // Throws ConfigError.
  void validate() const;
  // Learning rate used by the update with 1-based index `iteration`.
  double lr_at(std::uint64_t iteration) const;

  std::map<std::string, std::string> to_map() const;
  static TrainConfig from_map(const std::map<std::string, std::string>& kv);
};

// Adam with bias correction. Moments are indexed like HmanModel::parameters().
class Adam {
 public:
  Adam(const std::vector<NamedTensor>& params, double beta1, double beta2, double eps);

  // One update from the parameters' accumulated gradients. `t` is the
  // 1-based step count used for bias correction. Throws NumericError naming
  // the first parameter with a non-finite gradient.
  void step(const std::vector<NamedTensor>& params, double lr, std::uint64_t t);

  std::vector<NamedTensor> moments() const;
  void load_moments(const std::vector<NamedTensor>& moments);

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> m_, v_;
  double beta1_, beta2_, eps_;
};

// Rescales all gradients by min(1, clip / ||g||_2). Returns the norm before clipping.
double clip_grad_norm(const std::vector<NamedTensor>& params, double clip);

// Training view of one clip: the whole clip when it has at most `steps`
// frames, otherwise a random contiguous window or a sorted random subset.
Tensor sample_frames(const Tensor& clip, std::size_t steps, FrameSampling mode, Rng& rng);

// Consecutive non-overlapping blocks of `steps` frames; a shorter remainder
// forms its own block.
std::vector<Tensor> split_blocks(const Tensor& clip, std::size_t steps);

struct TauRecord {
  std::uint64_t iteration = 0;
  std::size_t step = 0;
  double min = 0, mean = 0, max = 0;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  std::uint64_t iteration = 0;
  double loss = 0;
  double accuracy = 0;
  double lr = 0;
  std::vector<double> update_rates;  // per layer, UPDATE or FLUSH share of steps
  std::vector<double> strict_update_rates;  // per layer, UPDATE share only
  double baseline = 0;
};

std::string metrics_csv_header(std::size_t layers);
std::string metrics_csv_row(const EpochMetrics& m);

class Trainer {
 public:
  Trainer(HmanModel& model, const TrainConfig& config);

  // One pass over `indices` of `data` in shuffled mini-batches.
  EpochMetrics train_epoch(const Dataset& data, std::span<const std::size_t> indices);

  // One update on fixed clips without frame sampling; returns the loss.
  double train_batch(std::span<const Tensor> clips, std::span<const std::size_t> labels);

  std::uint64_t iteration() const { return iteration_; }
  std::size_t epoch() const { return epoch_; }
  double baseline() const { return baseline_; }
  // Per-step temperatures, recorded for gumbel-adaptive attention only.
  const std::vector<TauRecord>& tau_log() const { return tau_log_; }

  TrainerState state() const;
  void restore(const TrainerState& state);

 private:
  struct BatchResult {
    double loss = 0;
    std::size_t correct = 0;
    OperationStats ops;
  };
  BatchResult update(std::span<const Tensor> clips, std::span<const std::size_t> labels, Rng& rng);

  HmanModel& model_;
  TrainConfig config_;
  std::vector<NamedTensor> params_;
  Adam adam_;
  std::uint64_t iteration_ = 0;
  std::size_t epoch_ = 0;
  double baseline_ = 0.0;
  std::vector<TauRecord> tau_log_;
};

struct EvalReport {
  std::vector<std::size_t> labels;
  std::vector<std::size_t> predicted;
  std::vector<std::vector<double>> probs;  // per video class probabilities
  OperationStats ops;

  double accuracy() const;
};

// Video-level predictions over `indices`: per-step probabilities averaged
// within each block of `steps` frames, then across blocks. Deterministic.
EvalReport evaluate(const HmanModel& model, const Dataset& data, std::span<const std::size_t> indices,
                    std::size_t steps, std::size_t batch = 64);

}  // namespace hman
