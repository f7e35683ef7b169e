#include "wsteg/imagerep.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "wsteg/error.hpp"

namespace wsteg {

std::string representation_name(Representation) { return "grayscale-fourpart"; }

Representation representation_from_name(const std::string& name) {
  if (name == "grayscale-fourpart") return Representation::grayscale_fourpart;
  throw UnsupportedError("unknown image representation: " + name);
}

GrayscaleImage grayscale_fourpart(const WeightTensor& weights) {
  if (weights.dtype != DType::f32()) throw UnsupportedError("grayscale-fourpart needs float32 weights");
  const std::size_t n = weights.size();
  if (n == 0) throw ArgumentError("grayscale-fourpart needs at least one weight");

  std::size_t side = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  while (side * side < n) ++side;
  while (side > 1 && (side - 1) * (side - 1) >= n) --side;

  GrayscaleImage image(2 * side, 2 * side, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t word = weights.bits[i];
    const std::size_t r = i / side;
    const std::size_t c = i % side;
    image.at(r, c) = static_cast<std::uint8_t>(word >> 24);
    image.at(r, c + side) = static_cast<std::uint8_t>(word >> 16);
    image.at(r + side, c) = static_cast<std::uint8_t>(word >> 8);
    image.at(r + side, c + side) = static_cast<std::uint8_t>(word);
  }
  return image;
}

GrayscaleImage resize(const GrayscaleImage& image, std::size_t height, std::size_t width) {
  if (image.height == 0 || image.width == 0 || height == 0 || width == 0) {
    throw ArgumentError("resize needs non-empty source and target");
  }
  if (height == image.height && width == image.width) return image;

  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t src, std::size_t dst) {
    std::vector<Tap> out(dst);
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (std::size_t d = 0; d < dst; ++d) {
      double s = (static_cast<double>(d) + 0.5) * scale - 0.5;
      s = std::clamp(s, 0.0, static_cast<double>(src - 1));
      const auto lo = static_cast<std::size_t>(std::floor(s));
      out[d] = {lo, std::min(lo + 1, src - 1), s - static_cast<double>(lo)};
    }
    return out;
  };
  const auto ys = taps(image.height, height);
  const auto xs = taps(image.width, width);

  GrayscaleImage out(height, width);
  for (std::size_t r = 0; r < height; ++r) {
    const auto& ty = ys[r];
    for (std::size_t c = 0; c < width; ++c) {
      const auto& tx = xs[c];
      const double top = (1.0 - tx.frac) * image.at(ty.lo, tx.lo) + tx.frac * image.at(ty.lo, tx.hi);
      const double bottom = (1.0 - tx.frac) * image.at(ty.hi, tx.lo) + tx.frac * image.at(ty.hi, tx.hi);
      const double v = (1.0 - ty.frac) * top + ty.frac * bottom;
      // nearbyint honours the default round-to-nearest-even mode.
      out.at(r, c) = static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0));
    }
  }
  return out;
}

NormalizedImage normalize(const GrayscaleImage& image) {
  NormalizedImage out{image.height, image.width, std::vector<float>(image.pixels.size())};
  std::transform(image.pixels.begin(), image.pixels.end(), out.pixels.begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return out;
}

GrayscaleImage denormalize(const NormalizedImage& image) {
  GrayscaleImage out(image.height, image.width);
  std::transform(image.pixels.begin(), image.pixels.end(), out.pixels.begin(), [](float v) {
    return static_cast<std::uint8_t>(std::clamp(std::nearbyint(static_cast<double>(v) * 255.0), 0.0, 255.0));
  });
  return out;
}

GrayscaleImage model_image(const ModelWeights& model, Representation rep, std::size_t size) {
  switch (rep) {
    case Representation::grayscale_fourpart:
      return resize(grayscale_fourpart(flatten(model)), size, size);
  }
  throw UnsupportedError("unknown image representation");
}

std::vector<std::uint8_t> encode_pgm(const GrayscaleImage& image) {
  const std::string header = "P5 " + std::to_string(image.width) + " " + std::to_string(image.height) + " 255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

GrayscaleImage decode_pgm(std::span<const std::uint8_t> bytes) {
  std::size_t pos = 0;
  auto next_token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string token;
    while (pos < bytes.size() && !std::isspace(bytes[pos]) && bytes[pos] != '#') token.push_back(static_cast<char>(bytes[pos++]));
    if (token.empty()) throw FormatError("PGM header truncated");
    return token;
  };
  auto next_number = [&]() {
    const std::string t = next_token();
    if (!std::all_of(t.begin(), t.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); }) ||
        t.size() > 9) {
      throw FormatError("PGM header has a bad number: " + t);
    }
    return static_cast<std::size_t>(std::stoul(t));
  };

  if (next_token() != "P5") throw FormatError("not a binary PGM (P5) file");
  const std::size_t width = next_number();
  const std::size_t height = next_number();
  const std::size_t maxval = next_number();
  if (maxval != 255) throw UnsupportedError("PGM maxval " + std::to_string(maxval) + " is not supported (need 255)");
  if (width == 0 || height == 0) throw FormatError("PGM has zero size");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) throw FormatError("PGM header truncated");
  ++pos;
  if (bytes.size() - pos < width * height) throw FormatError("PGM pixel data truncated");

  GrayscaleImage image(height, width);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), width * height, image.pixels.begin());
  return image;
}

void write_pgm(const GrayscaleImage& image, const std::filesystem::path& path) { write_file(path, encode_pgm(image)); }

GrayscaleImage read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file(path)); }

}  // namespace wsteg
