#include "wsteg/steg.hpp"

#include <string>

#include "wsteg/digest.hpp"
#include "wsteg/error.hpp"
#include "wsteg/rng.hpp"

namespace wsteg {

namespace {

void check_range(int lsb, DType dtype) {
  if (lsb < 1 || lsb > dtype.bits) {
    throw ArgumentError("LSB count " + std::to_string(lsb) + " outside 1.." + std::to_string(dtype.bits));
  }
}

// Mask of `len` bits whose top bit sits at position `lsb - 1`.
std::uint32_t field_mask(int lsb, int len) {
  const std::uint64_t ones = (std::uint64_t{1} << len) - 1;
  return static_cast<std::uint32_t>(ones << (lsb - len));
}

}  // namespace

Payload payload_from_bytes(std::span<const std::uint8_t> bytes) {
  Payload p;
  p.bits.reserve(bytes.size() * 8);
  for (auto byte : bytes) {
    for (int b = 7; b >= 0; --b) p.bits.push_back((byte >> b) & 1);
  }
  return p;
}

std::vector<std::uint8_t> payload_to_bytes(const Payload& payload) {
  std::vector<std::uint8_t> out((payload.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    if (payload.bits[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  }
  return out;
}

Payload synthetic_payload(std::size_t n_bytes, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> bytes(n_bytes);
  for (auto& b : bytes) b = static_cast<std::uint8_t>(rng.next() >> 56);
  Payload p = payload_from_bytes(bytes);
  p.source = Payload::Source::synthetic;
  p.seed = seed;
  return p;
}

std::string payload_sha256(const Payload& payload) {
  // Hash the bit string itself so payloads that are not whole bytes still
  // get distinct digests.
  return sha256_hex(std::span<const std::uint8_t>(payload.bits));
}

void validate_lsb(int lsb, DType dtype, bool mantissa_only) {
  check_range(lsb, dtype);
  if (mantissa_only && lsb > dtype.mantissa) {
    throw ArgumentError("LSB count " + std::to_string(lsb) + " reaches past the " + std::to_string(dtype.mantissa) +
                        "-bit mantissa (pass --allow-exponent to permit)");
  }
}

WeightTensor x_lsb_attack(const WeightTensor& cover, int lsb, const Payload& payload) {
  check_range(lsb, cover.dtype);
  const std::size_t n = cover.size();
  const std::size_t k = payload.size();
  const auto x = static_cast<std::size_t>(lsb);
  if (k > n * x) {
    throw CapacityError("payload of " + std::to_string(k) + " bits does not fit in " + std::to_string(n) +
                        " weights at " + std::to_string(lsb) + " LSBs");
  }
  WeightTensor out = cover;
  for (std::size_t i = 0, pos = 0; pos < k; ++i) {
    const int len = static_cast<int>(std::min(x, k - pos));
    std::uint32_t chunk = 0;
    for (int b = 0; b < len; ++b) chunk = (chunk << 1) | payload.bits[pos + static_cast<std::size_t>(b)];
    const std::uint32_t mask = field_mask(lsb, len);
    out.bits[i] = (out.bits[i] & ~mask) | (chunk << (lsb - len));
    pos += static_cast<std::size_t>(len);
  }
  return out;
}

Payload fill_payload(const Payload& payload, std::size_t n_weights, int lsb) {
  if (payload.size() == 0) throw ArgumentError("fill attack needs a non-empty payload");
  const std::size_t total = n_weights * static_cast<std::size_t>(lsb);
  Payload out = payload;
  out.bits.resize(total);
  for (std::size_t i = payload.size(); i < total; ++i) out.bits[i] = payload.bits[i % payload.size()];
  return out;
}

WeightTensor x_lsb_attack_fill(const WeightTensor& cover, int lsb, const Payload& payload) {
  check_range(lsb, cover.dtype);
  if (payload.size() == 0) throw ArgumentError("fill attack needs a non-empty payload");
  if (cover.size() == 0) throw ArgumentError("fill attack needs at least one weight");
  return x_lsb_attack(cover, lsb, fill_payload(payload, cover.size(), lsb));
}

Payload extract_lsb(const WeightTensor& stego, int lsb, std::size_t k) {
  check_range(lsb, stego.dtype);
  const auto x = static_cast<std::size_t>(lsb);
  if (k > stego.size() * x) {
    throw ArgumentError("cannot extract " + std::to_string(k) + " bits from " + std::to_string(stego.size()) +
                        " weights at " + std::to_string(lsb) + " LSBs");
  }
  Payload p;
  p.bits.reserve(k);
  for (std::size_t i = 0, pos = 0; pos < k; ++i) {
    const int len = static_cast<int>(std::min(x, k - pos));
    for (int b = 0; b < len; ++b) p.bits.push_back((stego.bits[i] >> (lsb - 1 - b)) & 1);
    pos += static_cast<std::size_t>(len);
  }
  return p;
}

ModelWeights attack_model(const ModelWeights& cover, const AttackSpec& spec, const Payload& payload) {
  const WeightTensor flat = flatten(cover);
  validate_lsb(spec.lsb, flat.dtype, spec.mantissa_only);
  const WeightTensor attacked =
      spec.fill ? x_lsb_attack_fill(flat, spec.lsb, payload) : x_lsb_attack(flat, spec.lsb, payload);
  return unflatten(attacked, cover);
}

double embedding_rate(int lsb, int word_bits) {
  if (word_bits < 1 || lsb < 1 || lsb > word_bits) {
    throw ArgumentError("embedding rate needs 1 <= X <= s");
  }
  return static_cast<double>(lsb) / word_bits;
}

double embedding_rate_general(std::size_t payload_bits, std::size_t n_weights, int word_bits) {
  if (n_weights == 0) throw ArgumentError("embedding rate needs at least one weight");
  if (word_bits < 1) throw ArgumentError("embedding rate needs a positive word size");
  const double capacity = static_cast<double>(n_weights) * word_bits;
  if (static_cast<double>(payload_bits) > capacity) throw ArgumentError("payload larger than cover");
  return static_cast<double>(payload_bits) / capacity;
}

}  // namespace wsteg
