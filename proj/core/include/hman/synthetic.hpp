#pragma once

// Synthetic hierarchical sequences with known segment boundaries.
//
// Every class is a fixed sequence of `segments` sub-action tokens with no
// token repeated back to back. A clip renders each token as a run of frames
// in which one grid location (fixed per token) carries that token's
// prototype vector plus Gaussian noise; every other location carries noise
// only. The class is therefore only recoverable by locating the active cell
// and reading the token order.

#include <cstdint>
#include <vector>

#include "hman/data_io.hpp"

namespace hman {

struct SyntheticSpec {
  std::size_t classes = 8;
  std::size_t vocab = 6;
  std::size_t segments = 3;
  std::size_t min_length = 5;
  std::size_t max_length = 10;
  std::size_t grid = 4;
  std::size_t depth = 16;
  double noise = 0.1;
  std::size_t clips_per_class = 125;
  double test_fraction = 0.2;
  std::uint64_t seed = 0;

  // Distinct token sequences of length `segments` without immediate repeats.
  double distinct_sequences() const;
  // Throws ConfigError for infeasible or malformed specs.
  void validate() const;
};

struct SyntheticTask {
  std::vector<std::vector<std::size_t>> class_tokens;  // [class][segment]
  std::vector<std::size_t> token_location;             // [token]
  std::vector<std::vector<double>> prototypes;         // [token][depth], float-representable
};

struct SyntheticDataset {
  Dataset data;
  SyntheticTask task;
};

// Deterministic in the spec (including seed). Feature values are rounded to
// float so that the in-memory dataset equals what write_dataset stores.
SyntheticDataset gen_synthetic(const SyntheticSpec& spec);

}  // namespace hman
