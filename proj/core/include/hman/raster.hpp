#pragma once

// Grayscale raster export (binary PGM, P5, maxval 255).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace hman {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

std::vector<unsigned char> encode_pgm(const GrayImage& image);
GrayImage decode_pgm(std::span<const unsigned char> bytes);
void write_pgm(const std::filesystem::path& path, const GrayImage& image);

// K x K image of attention weights scaled so the largest weight maps to 255.
// A one-hot weight vector yields a single white pixel.
GrayImage attention_image(std::span<const double> weights, std::size_t grid);

// 1 x T strip; boundary steps are black (0), others white (255).
GrayImage boundary_strip(std::span<const int> z);

// Rows of comma-separated values with %.17g formatting.
std::string csv_rows(const std::vector<std::vector<double>>& rows);

}  // namespace hman
