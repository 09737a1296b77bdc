#include "hman/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "hman/errors.hpp"
#include "hman/rng.hpp"

namespace hman {

namespace {

double as_float(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string clip_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "clip_%05zu", i);
  return buf;
}

// Enumerates sequences without immediate repeats in lexicographic order.
void enumerate_sequences(std::size_t vocab, std::size_t segments, std::vector<std::size_t>& cur,
                         std::vector<std::vector<std::size_t>>& out) {
  if (cur.size() == segments) {
    out.push_back(cur);
    return;
  }
  for (std::size_t v = 0; v < vocab; ++v) {
    if (!cur.empty() && cur.back() == v) continue;
    cur.push_back(v);
    enumerate_sequences(vocab, segments, cur, out);
    cur.pop_back();
  }
}

}  // namespace

double SyntheticSpec::distinct_sequences() const {
  if (segments == 0 || vocab == 0) return 0.0;
  return static_cast<double>(vocab) * std::pow(static_cast<double>(vocab - 1), static_cast<double>(segments - 1));
}

void SyntheticSpec::validate() const {
  if (classes < 2) throw ConfigError("synthetic data needs at least two classes");
  if (segments == 0 || vocab == 0) throw ConfigError("vocabulary and segment count must be positive");
  if (min_length == 0 || min_length > max_length) throw ConfigError("segment length range must satisfy 1 <= min <= max");
  if (grid == 0 || depth == 0) throw ConfigError("grid and depth must be positive");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be a finite non-negative value");
  if (clips_per_class == 0) throw ConfigError("clips per class must be positive");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) throw ConfigError("test fraction must lie in [0, 1)");
  if (static_cast<double>(classes) > distinct_sequences()) {
    throw ConfigError("infeasible synthetic spec: " + std::to_string(classes) + " classes but only " +
                      std::to_string(static_cast<long long>(distinct_sequences())) +
                      " distinct token sequences from vocabulary " + std::to_string(vocab) + " and " +
                      std::to_string(segments) + " segments");
  }
}

SyntheticDataset gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed, 0x5EED);
  SyntheticDataset out;
  SyntheticTask& task = out.task;

  // Token placement: distinct cells while the grid allows it.
  const std::size_t cells = spec.grid * spec.grid;
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = cells; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
  for (std::size_t v = 0; v < spec.vocab; ++v) {
    task.token_location.push_back(v < cells ? order[v] : rng.index(cells));
  }
  for (std::size_t v = 0; v < spec.vocab; ++v) {
    std::vector<double> proto(spec.depth);
    for (double& x : proto) x = as_float(rng.normal());
    task.prototypes.push_back(std::move(proto));
  }

  // Class token sequences.
  if (spec.distinct_sequences() <= 200000.0) {
    std::vector<std::vector<std::size_t>> all;
    std::vector<std::size_t> cur;
    enumerate_sequences(spec.vocab, spec.segments, cur, all);
    for (std::size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.index(i)]);
    task.class_tokens.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(spec.classes));
  } else {
    std::set<std::vector<std::size_t>> seen;
    while (task.class_tokens.size() < spec.classes) {
      std::vector<std::size_t> seq;
      while (seq.size() < spec.segments) {
        const std::size_t v = rng.index(spec.vocab);
        if (seq.empty() || seq.back() != v) seq.push_back(v);
      }
      if (seen.insert(seq).second) task.class_tokens.push_back(std::move(seq));
    }
  }

  Dataset& data = out.data;
  data.manifest.dataset = "synthetic";
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::string name = "class" + std::to_string(c);
    for (std::size_t tok : task.class_tokens[c]) name += "_" + std::to_string(tok);
    data.manifest.classes.push_back(std::move(name));
  }

  const std::size_t test_per_class =
      static_cast<std::size_t>(std::llround(spec.test_fraction * static_cast<double>(spec.clips_per_class)));
  const std::size_t n_loc = cells;
  std::size_t next_id = 0;
  for (std::size_t k = 0; k < spec.clips_per_class; ++k) {
    for (std::size_t c = 0; c < spec.classes; ++c) {
      std::vector<std::size_t> lengths(spec.segments);
      std::size_t total = 0;
      for (auto& len : lengths) {
        len = static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(spec.min_length),
                                                   static_cast<std::int64_t>(spec.max_length)));
        total += len;
      }
      std::vector<double> values(total * n_loc * spec.depth);
      std::vector<std::size_t> boundaries;
      std::size_t t = 0;
      for (std::size_t s = 0; s < spec.segments; ++s) {
        const std::size_t tok = task.class_tokens[c][s];
        for (std::size_t f = 0; f < lengths[s]; ++f, ++t) {
          for (std::size_t loc = 0; loc < n_loc; ++loc) {
            double* cell = values.data() + (t * n_loc + loc) * spec.depth;
            const bool active = loc == task.token_location[tok];
            for (std::size_t d = 0; d < spec.depth; ++d) {
              const double noise = spec.noise > 0.0 ? spec.noise * rng.normal() : 0.0;
              cell[d] = as_float((active ? task.prototypes[tok][d] : 0.0) + noise);
            }
          }
        }
        if (s + 1 < spec.segments) boundaries.push_back(t - 1);
      }

      VideoSample sample;
      sample.id = clip_id(next_id++);
      sample.label = c;
      sample.grid = spec.grid;
      sample.features = Tensor::from({total, n_loc, spec.depth}, std::move(values));
      sample.boundaries = boundaries;

      ManifestEntry entry;
      entry.id = sample.id;
      entry.path = "clips/" + sample.id + ".hmft";
      entry.label = c;
      entry.split = k >= spec.clips_per_class - test_per_class ? Split::Test : Split::Train;
      entry.boundaries = std::move(boundaries);
      data.manifest.samples.push_back(std::move(entry));
      data.samples.push_back(std::move(sample));
    }
  }
  data.manifest.validate();
  return out;
}

}  // namespace hman
