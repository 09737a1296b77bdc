#include "hman/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "hman/errors.hpp"

namespace hman {

std::vector<unsigned char> encode_pgm(const GrayImage& image) {
  if (image.pixels.size() != image.width * image.height) throw DimensionError("PGM pixel count does not match size");
  const std::string header =
      "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

GrayImage decode_pgm(std::span<const unsigned char> bytes) {
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) ++pos;
    if (start == pos) throw FormatError("truncated PGM header", pos);
    return std::string(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                       bytes.begin() + static_cast<std::ptrdiff_t>(pos));
  };
  if (token() != "P5") throw FormatError("not a binary PGM (expected P5)", 0);
  GrayImage img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    const std::size_t at = pos;
    if (std::stoul(token()) != 255) throw FormatError("unsupported PGM maxval", at);
  } catch (const std::logic_error&) {
    throw FormatError("malformed PGM header", pos);
  }
  ++pos;
  if (bytes.size() - std::min(pos, bytes.size()) != img.width * img.height) {
    throw FormatError("PGM payload size mismatch", pos);
  }
  img.pixels.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
  return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  const auto bytes = encode_pgm(image);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

GrayImage attention_image(std::span<const double> weights, std::size_t grid) {
  if (weights.size() != grid * grid) throw DimensionError("attention weights do not form a grid");
  GrayImage img{grid, grid, {}};
  const double peak = *std::max_element(weights.begin(), weights.end());
  for (double w : weights) {
    const double v = peak > 0 ? std::round(255.0 * w / peak) : 0.0;
    img.pixels.push_back(static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0)));
  }
  return img;
}

GrayImage boundary_strip(std::span<const int> z) {
  GrayImage img{z.size(), 1, {}};
  for (int b : z) img.pixels.push_back(b ? 0 : 255);
  return img;
}

std::string csv_rows(const std::vector<std::vector<double>>& rows) {
  std::string out;
  char buf[32];
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", row[i]);
      if (i) out += ",";
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace hman
