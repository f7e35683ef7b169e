#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wsteg/weights_io.hpp"

namespace wsteg {

// Bit string b_1..b_k, one bit per element (0 or 1), first bit first.
struct Payload {
  enum class Source { file, synthetic };

  std::vector<std::uint8_t> bits;
  Source source = Source::file;
  std::optional<std::uint64_t> seed;  // set for synthetic payloads

  std::size_t size() const { return bits.size(); }

  friend bool operator==(const Payload& a, const Payload& b) { return a.bits == b.bits; }
};

// Bytes are expanded MSB-first.
Payload payload_from_bytes(std::span<const std::uint8_t> bytes);
// Packs MSB-first; a partial final byte is zero-padded at the bottom.
std::vector<std::uint8_t> payload_to_bytes(const Payload& payload);
// Seeded pseudo-random bytes standing in for a malware sample.
Payload synthetic_payload(std::size_t n_bytes, std::uint64_t seed);
std::string payload_sha256(const Payload& payload);

struct AttackSpec {
  int lsb = 1;
  bool fill = true;
  // Refuse X > ms so sign and exponent bits stay untouched.
  bool mantissa_only = true;
};

// Throws ArgumentError unless 1 <= X <= s (and X <= ms when mantissa_only).
void validate_lsb(int lsb, DType dtype, bool mantissa_only);

// X-LSB substitution. Chunk i of the payload (X bits, the last one possibly
// shorter) is written MSB-first into the X-bit low field of weight i; a short
// last chunk occupies the top of that field and the cover keeps the rest.
WeightTensor x_lsb_attack(const WeightTensor& cover, int lsb, const Payload& payload);

// The payload stretched to exactly n*X bits: prefix if too long, repeated and
// truncated otherwise.
Payload fill_payload(const Payload& payload, std::size_t n_weights, int lsb);

// Fills every weight's X LSBs with the (repeated or truncated) payload.
WeightTensor x_lsb_attack_fill(const WeightTensor& cover, int lsb, const Payload& payload);

// Reads back the first k payload bits using the same chunk layout.
Payload extract_lsb(const WeightTensor& stego, int lsb, std::size_t k);

// Applies spec to the whole model in flatten order.
ModelWeights attack_model(const ModelWeights& cover, const AttackSpec& spec, const Payload& payload);

double embedding_rate(int lsb, int word_bits);
double embedding_rate_general(std::size_t payload_bits, std::size_t n_weights, int word_bits);

}  // namespace wsteg
