#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hman/rng.hpp"

namespace hman {

// confusion[true][predicted]
std::vector<std::vector<std::size_t>> confusion_matrix(std::span<const std::size_t> labels,
                                                       std::span<const std::size_t> predicted,
                                                       std::size_t classes);
// Row-normalized diagonal; classes without samples report 0.
std::vector<double> per_class_accuracy(const std::vector<std::vector<std::size_t>>& confusion);

// Average precision of one class from per-item scores: the mean, over
// positives, of precision at each positive's rank. Items are ranked by
// descending score, ties by index. Returns 0 when there are no positives.
double average_precision(std::span<const double> scores, const std::vector<bool>& positive);

struct BoundaryScore {
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t truth = 0;

  double precision() const;
  double recall() const;
  double f1() const;
  void add(const BoundaryScore& other);
};

// One-to-one matching of predicted to true boundary frames within
// +-tolerance frames. True boundaries are visited in order and take the
// nearest unmatched prediction (earlier frame on ties).
BoundaryScore match_boundaries(std::span<const std::size_t> predicted, std::span<const std::size_t> truth,
                               std::size_t tolerance);

// Mean F1 of a Bernoulli(rate) boundary process scored against `truth`
// (micro-averaged over clips of the given lengths) across `trials` draws.
double chance_boundary_f1(const std::vector<std::vector<std::size_t>>& truth, std::span<const std::size_t> lengths,
                          double rate, std::size_t tolerance, std::size_t trials, Rng& rng);

}  // namespace hman
