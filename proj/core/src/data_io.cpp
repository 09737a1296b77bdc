#include "hman/data_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include <nlohmann/json.hpp>

#include "hman/errors.hpp"

namespace hman {

namespace fs = std::filesystem;

namespace {

std::uint32_t read_u32(std::span<const unsigned char> b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
         (static_cast<std::uint32_t>(b[off + 2]) << 16) | (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

std::vector<unsigned char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, std::span<const unsigned char> bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace

std::string to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ConfigError("unknown split '" + s + "'");
}

Tensor decode_features(std::span<const unsigned char> bytes, std::size_t* grid_out) {
  if (bytes.size() < kFeatureHeaderBytes) {
    throw FormatError("truncated header: expected " + std::to_string(kFeatureHeaderBytes) + " bytes, got " +
                          std::to_string(bytes.size()),
                      bytes.size());
  }
  if (std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) throw FormatError("bad magic, expected \"HMFT\"", 0);
  const std::uint32_t version = read_u32(bytes, 4);
  if (version != kFeatureVersion) throw FormatError("unsupported version " + std::to_string(version), 4);
  const std::uint32_t t = read_u32(bytes, 8);
  const std::uint32_t k = read_u32(bytes, 12);
  const std::uint32_t d = read_u32(bytes, 16);
  if (t == 0) throw FormatError("clip has zero frames", 8);
  if (k == 0) throw FormatError("grid side must be positive", 12);
  if (d == 0) throw FormatError("feature depth must be positive", 16);

  const std::uint64_t count = std::uint64_t{t} * k * k * d;
  const std::uint64_t expected = kFeatureHeaderBytes + 4 * count;
  if (bytes.size() < expected) {
    throw FormatError("truncated payload: expected " + std::to_string(expected - kFeatureHeaderBytes) +
                          " bytes, got " + std::to_string(bytes.size() - kFeatureHeaderBytes),
                      bytes.size());
  }
  if (bytes.size() > expected) {
    throw FormatError("trailing data: expected " + std::to_string(expected) + " bytes in total, got " +
                          std::to_string(bytes.size()),
                      expected);
  }
  std::vector<double> values(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t off = kFeatureHeaderBytes + 4 * i;
    const float f = std::bit_cast<float>(read_u32(bytes, off));
    if (!std::isfinite(f)) throw FormatError("non-finite feature value", off);
    values[i] = f;
  }
  if (grid_out) *grid_out = k;
  return Tensor::from({t, std::size_t{k} * k, d}, std::move(values));
}

std::vector<unsigned char> encode_features(const Tensor& features, std::size_t grid) {
  if (features.rank() != 3 || features.dim(1) != grid * grid) {
    throw DimensionError("features " + shape_string(features.shape()) + " do not form a " + std::to_string(grid) +
                         "x" + std::to_string(grid) + " grid");
  }
  std::vector<unsigned char> out;
  out.reserve(kFeatureHeaderBytes + 4 * features.size());
  out.insert(out.end(), kFeatureMagic, kFeatureMagic + 4);
  put_u32(out, kFeatureVersion);
  put_u32(out, static_cast<std::uint32_t>(features.dim(0)));
  put_u32(out, static_cast<std::uint32_t>(grid));
  put_u32(out, static_cast<std::uint32_t>(features.dim(2)));
  for (double v : features.values()) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw NumericError("cannot encode non-finite feature value");
    put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

VideoSample load_features(const fs::path& path) {
  const auto bytes = read_file(path);
  VideoSample s;
  s.id = path.stem().string();
  try {
    s.features = decode_features(bytes, &s.grid);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.message(), e.offset());
  }
  return s;
}

void write_features(const fs::path& path, const Tensor& features, std::size_t grid) {
  write_file(path, encode_features(features, grid));
}

// ---------------------------------------------------------------- manifest

void Manifest::validate() const {
  if (classes.empty()) throw ConfigError("manifest lists no classes");
  std::set<std::string> ids, paths;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    if (s.label >= classes.size()) {
      throw ConfigError("sample '" + s.id + "' has label " + std::to_string(s.label) + " outside [0, " +
                            std::to_string(classes.size()) + ")");
    }
    if (!ids.insert(s.id).second) throw ConfigError("duplicate sample id '" + s.id + "'");
    if (!paths.insert(s.path).second) throw ConfigError("duplicate sample path '" + s.path + "'");
  }
}

std::vector<std::size_t> Manifest::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == split) out.push_back(i);
  return out;
}

Manifest parse_manifest(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("manifest is not valid JSON: ") + e.what(), e.byte);
  }
  Manifest m;
  try {
    m.dataset = j.value("dataset", std::string("unnamed"));
    m.classes = j.at("classes").get<std::vector<std::string>>();
    for (const auto& s : j.at("samples")) {
      ManifestEntry e;
      e.id = s.at("id").get<std::string>();
      e.path = s.at("path").get<std::string>();
      e.label = s.at("label").get<std::size_t>();
      e.split = parse_split(s.value("split", std::string("train")));
      if (s.contains("boundaries")) e.boundaries = s.at("boundaries").get<std::vector<std::size_t>>();
      m.samples.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest schema error: ") + e.what(), 0);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("manifest schema error: ") + e.what(), 0);
  }
  m.validate();
  return m;
}

std::string manifest_to_json(const Manifest& manifest) {
  nlohmann::ordered_json j;
  j["format"] = "hman-manifest";
  j["version"] = 1;
  j["dataset"] = manifest.dataset;
  j["classes"] = manifest.classes;
  auto samples = nlohmann::ordered_json::array();
  for (const auto& s : manifest.samples) {
    nlohmann::ordered_json e;
    e["id"] = s.id;
    e["path"] = s.path;
    e["label"] = s.label;
    e["split"] = to_string(s.split);
    if (s.boundaries) e["boundaries"] = *s.boundaries;
    samples.push_back(std::move(e));
  }
  j["samples"] = std::move(samples);
  return j.dump(2) + "\n";
}

Manifest load_manifest(const fs::path& path) {
  const auto bytes = read_file(path);
  return parse_manifest(std::string(bytes.begin(), bytes.end()));
}

void save_manifest(const fs::path& path, const Manifest& manifest) {
  manifest.validate();
  const std::string text = manifest_to_json(manifest);
  write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

Dataset load_dataset(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw ConfigError("no manifest.json in '" + dir.string() + "'");
  Dataset d;
  d.manifest = load_manifest(manifest_path);
  for (const auto& e : d.manifest.samples) {
    VideoSample s = load_features(dir / e.path);
    s.id = e.id;
    s.label = e.label;
    s.boundaries = e.boundaries;
    if (!d.samples.empty()) {
      const auto& first = d.samples.front().features;
      if (s.features.dim(1) != first.dim(1) || s.features.dim(2) != first.dim(2)) {
        throw FormatError("sample '" + e.id + "' has grid/depth " + shape_string(s.features.shape()) +
                              " inconsistent with " + shape_string(first.shape()),
                          12);
      }
    }
    d.samples.push_back(std::move(s));
  }
  return d;
}

void write_dataset(const fs::path& dir, const Dataset& dataset) {
  if (dataset.samples.size() != dataset.manifest.samples.size()) {
    throw ContractError("write_dataset: manifest and samples differ in length");
  }
  fs::create_directories(dir);
  save_manifest(dir / "manifest.json", dataset.manifest);
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    write_features(dir / dataset.manifest.samples[i].path, dataset.samples[i].features, dataset.samples[i].grid);
  }
}

}  // namespace hman
