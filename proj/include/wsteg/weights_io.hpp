#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace wsteg {

// Floating point storage type of a weight word. `bits` is the word width s,
// `mantissa` is ms.
struct DType {
  enum class Kind { f32, f16 };

  Kind kind = Kind::f32;
  int bits = 32;
  int mantissa = 23;

  static constexpr DType f32() { return {Kind::f32, 32, 23}; }
  static constexpr DType f16() { return {Kind::f16, 16, 10}; }

  constexpr std::size_t word_bytes() const { return static_cast<std::size_t>(bits) / 8; }
  constexpr std::uint32_t word_mask() const {
    return bits == 32 ? 0xFFFFFFFFu : ((1u << bits) - 1u);
  }

  friend constexpr bool operator==(const DType&, const DType&) = default;
};

std::string dtype_name(DType dtype);  // "F32" / "F16"
DType dtype_from_name(const std::string& name);

// A named tensor of raw s-bit words. Words are held in the low `dtype.bits`
// bits of each uint32_t; bit b_{s-1} is the sign bit.
struct WeightTensor {
  std::string name;
  DType dtype = DType::f32();
  std::vector<std::size_t> shape;
  std::vector<std::uint32_t> bits;

  std::size_t size() const { return bits.size(); }

  friend bool operator==(const WeightTensor&, const WeightTensor&) = default;
};

struct ModelWeights {
  std::vector<WeightTensor> tensors;
  // Free-form string metadata carried in the container header.
  std::map<std::string, std::string> metadata;
  std::string source_path;

  std::size_t parameter_count() const;

  // Equality ignores source_path: it is provenance, not content.
  friend bool operator==(const ModelWeights& a, const ModelWeights& b) {
    return a.tensors == b.tensors && a.metadata == b.metadata;
  }
};

std::size_t element_count(const std::vector<std::size_t>& shape);

// Decimal view of one word. Never used to modify bits.
double word_value(std::uint32_t word, DType dtype);
std::uint32_t f32_word(float value);
float f32_value(std::uint32_t word);
double f16_value(std::uint16_t word);

bool word_is_finite(std::uint32_t word, DType dtype);
std::size_t count_non_finite(const WeightTensor& tensor);

// Consecutive little-endian words. Returns one unnamed 1-D tensor.
WeightTensor read_raw(std::span<const std::uint8_t> bytes, DType dtype);
std::vector<std::uint8_t> write_raw(const WeightTensor& tensor);

// safetensors-compatible container: u64 LE header length, JSON header,
// then the tensor byte buffer.
ModelWeights read_container(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_container(const ModelWeights& model);

// All tensors concatenated in file order. Requires a single dtype.
WeightTensor flatten(const ModelWeights& model);
// Inverse of flatten: splits `flat` back into the tensor layout of `layout`.
ModelWeights unflatten(const WeightTensor& flat, const ModelWeights& layout);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Picks the raw reader for .f32/.f16 and the container reader otherwise.
ModelWeights load_model(const std::filesystem::path& path);
void save_model(const ModelWeights& model, const std::filesystem::path& path);

}  // namespace wsteg
