#pragma once

// Model checkpoints (all integers little-endian):
//
//   5 bytes   magic "HMAN1"
//   u32 n, n bytes   ModelConfig as "key=value\n" text
//   u32 count        parameter tensors, each:
//                      u32 name length, name bytes, u32 rank, rank x u32 extents,
//                      prod(extents) x f64 values
//   optional trainer section:
//     4 bytes "TRNR", u64 iteration, u64 epoch, f64 baseline,
//     u32 count, tensors as above (first and second Adam moments, named
//     "m:<param>" and "v:<param>")

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "hman/model.hpp"

namespace hman {

inline constexpr char kCheckpointMagic[5] = {'H', 'M', 'A', 'N', '1'};

struct TrainerState {
  std::uint64_t iteration = 0;
  std::uint64_t epoch = 0;
  double baseline = 0.0;
  std::vector<NamedTensor> moments;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<NamedTensor> parameters;
  std::optional<TrainerState> trainer;
};

std::vector<unsigned char> encode_checkpoint(const Checkpoint& checkpoint);
// Throws FormatError with the failing byte offset.
Checkpoint decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const HmanModel& model, std::optional<TrainerState> trainer = std::nullopt);
HmanModel restore_model(const Checkpoint& checkpoint);

}  // namespace hman
