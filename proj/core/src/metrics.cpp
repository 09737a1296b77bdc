#include "hman/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "hman/errors.hpp"

namespace hman {

std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const std::size_t> labels,
                                                       std::span<const std::size_t> predicted,
                                                       std::size_t classes) {
  if (labels.size() != predicted.size()) throw ContractError("confusion_matrix: label/prediction count mismatch");
  std::vector<std::vector<std::size_t>> m(classes, std::vector<std::size_t>(classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes || predicted[i] >= classes) throw ContractError("confusion_matrix: class out of range");
    ++m[labels[i]][predicted[i]];
  }
  return m;
}

std::vector<double> per_class_accuracy(const std::vector<std::vector<std::size_t>>& confusion) {
  std::vector<double> out;
  for (std::size_t c = 0; c < confusion.size(); ++c) {
    const std::size_t total = std::accumulate(confusion[c].begin(), confusion[c].end(), std::size_t{0});
    out.push_back(total ? static_cast<double>(confusion[c][c]) / static_cast<double>(total) : 0.0);
  }
  return out;
}

double average_precision(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ContractError("average_precision: score/label count mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t hits = 0;
  double sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!positive[order[rank]]) continue;
    ++hits;
    sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
  }
  return hits ? sum / static_cast<double>(hits) : 0.0;
}

double BoundaryScore::precision() const {
  return predicted ? static_cast<double>(matched) / static_cast<double>(predicted) : 0.0;
}

double BoundaryScore::recall() const { return truth ? static_cast<double>(matched) / static_cast<double>(truth) : 0.0; }

double BoundaryScore::f1() const {
  const double p = precision(), r = recall();
  return p + r > 0 ? 2 * p * r / (p + r) : 0.0;
}

void BoundaryScore::add(const BoundaryScore& other) {
  matched += other.matched;
  predicted += other.predicted;
  truth += other.truth;
}

BoundaryScore match_boundaries(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                               std::size_t tolerance) {
  BoundaryScore s;
  s.predicted = predicted.size();
  s.truth = truth.size();
  std::vector<bool> used(predicted.size(), false);
  for (std::size_t g : truth) {
    std::size_t best = predicted.size();
    std::size_t best_dist = tolerance + 1;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
      if (used[i]) continue;
      const std::size_t d = predicted[i] > g ? predicted[i] - g : g - predicted[i];
      if (d < best_dist || (d == best_dist && best < predicted.size() && predicted[i] < predicted[best])) {
        if (d <= tolerance) {
          best = i;
          best_dist = d;
        }
      }
    }
    if (best < predicted.size()) {
      used[best] = true;
      ++s.matched;
    }
  }
  return s;
}

double chance_boundary_f1(const std::vector<std::vector<std::size_t>>& truth, std::span<const std::size_t> lengths,
                          double rate, std::size_t tolerance, std::size_t trials, Rng& rng) {
  if (truth.size() != lengths.size()) throw ContractError("chance_boundary_f1: one length per clip required");
  if (trials == 0) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    BoundaryScore score;
    for (std::size_t c = 0; c < truth.size(); ++c) {
      std::vector<std::size_t> pred;
      for (std::size_t t = 0; t < lengths[c]; ++t)
        if (rng.uniform() < rate) pred.push_back(t);
      score.add(match_boundaries(pred, truth[c], tolerance));
    }
    total += score.f1();
  }
  return total / static_cast<double>(trials);
}

}  // namespace hman
