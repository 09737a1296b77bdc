#pragma once

// Frame-feature files and dataset manifests.
//
// HMFT feature file (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "HMFT"
//   4       4     u32 version (= 1)
//   8       4     u32 T  frames
//   12      4     u32 K  grid side (K*K locations)
//   16      4     u32 D  feature length per location
//   20      4*T*K*K*D  float32 payload, frame-major, location-major within a frame
//
// Values are widened to double in memory; non-finite values are rejected.
//
// The manifest is a JSON document listing the class names and, per sample,
// its id, relative feature path, label, split and optional ground-truth
// segment boundaries.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hman/tensor.hpp"

namespace hman {

inline constexpr char kFeatureMagic[4] = {'H', 'M', 'F', 'T'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 20;

enum class Split { Train, Test };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct VideoSample {
  std::string id;
  std::size_t label = 0;
  std::size_t grid = 0;
  Tensor features;  // [T x K^2 x D]
  // Frame indices that end a segment (synthetic data only).
  std::optional<std::vector<std::size_t>> boundaries;

  std::size_t frames() const { return features.dim(0); }
};

struct ManifestEntry {
  std::string id;
  std::string path;  // relative to the manifest's directory
  std::size_t label = 0;
  Split split = Split::Train;
  std::optional<std::vector<std::size_t>> boundaries;
};

struct Manifest {
  std::string dataset;
  std::vector<std::string> classes;
  std::vector<ManifestEntry> samples;

  // Labels in range, ids and paths unique. Throws ConfigError.
  void validate() const;
  std::vector<std::size_t> indices(Split split) const;
};

// Decodes an HMFT byte buffer. Errors carry the failing byte offset.
Tensor decode_features(std::span<const unsigned char> bytes, std::size_t* grid_out = nullptr);
std::vector<unsigned char> encode_features(const Tensor& features, std::size_t grid);

// Reads one feature file; id defaults to the file stem and label to 0.
VideoSample load_features(const std::filesystem::path& path);
void write_features(const std::filesystem::path& path, const Tensor& features, std::size_t grid);

Manifest parse_manifest(const std::string& json_text);
std::string manifest_to_json(const Manifest& manifest);
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const Manifest& manifest);

struct Dataset {
  Manifest manifest;
  std::vector<VideoSample> samples;  // parallel to manifest.samples

  std::size_t classes() const { return manifest.classes.size(); }
  std::vector<std::size_t> indices(Split split) const { return manifest.indices(split); }
};

// Loads `dir/manifest.json` and every listed feature file; rejects clips with
// zero frames and clips whose grid or depth differs from the first.
Dataset load_dataset(const std::filesystem::path& dir);
// Writes `dir/manifest.json` and every sample's features at its manifest path.
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);

}  // namespace hman
