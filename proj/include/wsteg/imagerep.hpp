#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wsteg/weights_io.hpp"

namespace wsteg {

struct GrayscaleImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayscaleImage() = default;
  GrayscaleImage(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), pixels(h * w, fill) {}

  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
  std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }

  friend bool operator==(const GrayscaleImage&, const GrayscaleImage&) = default;
};

struct NormalizedImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> pixels;  // row-major, each in [0, 1]
};

enum class Representation { grayscale_fourpart };

std::string representation_name(Representation rep);
Representation representation_from_name(const std::string& name);

// Splits every float32 word into its four bytes (most significant first),
// lays each byte plane out as a zero-padded ceil(sqrt(n)) square, and tiles
// the planes as [[I1 I2], [I3 I4]].
GrayscaleImage grayscale_fourpart(const WeightTensor& weights);

// Bilinear resampling with half-pixel centers; results round half to even.
GrayscaleImage resize(const GrayscaleImage& image, std::size_t height, std::size_t width);

NormalizedImage normalize(const GrayscaleImage& image);
GrayscaleImage denormalize(const NormalizedImage& image);

// Whole pipeline used for datasets: representation -> square resize -> [0,1].
GrayscaleImage model_image(const ModelWeights& model, Representation rep, std::size_t size);

// Binary PGM (P5, maxval 255).
std::vector<std::uint8_t> encode_pgm(const GrayscaleImage& image);
GrayscaleImage decode_pgm(std::span<const std::uint8_t> bytes);
void write_pgm(const GrayscaleImage& image, const std::filesystem::path& path);
GrayscaleImage read_pgm(const std::filesystem::path& path);

}  // namespace wsteg
