#include "wsteg/weights_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>

#include "json.hpp"
#include "wsteg/error.hpp"

namespace wsteg {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr char kMetadataKey[] = "__metadata__";

std::uint32_t load_word(const std::uint8_t* p, std::size_t width) {
  std::uint32_t word = 0;
  for (std::size_t i = 0; i < width; ++i) word |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return word;
}

void store_word(std::uint32_t word, std::size_t width, std::vector<std::uint8_t>& out) {
  for (std::size_t i = 0; i < width; ++i) out.push_back(static_cast<std::uint8_t>(word >> (8 * i)));
}

std::uint64_t load_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

std::size_t checked_index(const ordered_json& value, const std::string& what) {
  if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<std::int64_t>() >= 0)) {
    throw FormatError(what + ": expected a non-negative integer");
  }
  return value.get<std::size_t>();
}

// nlohmann keeps the last value for a repeated key, so duplicates must be
// caught while parsing.
ordered_json parse_header(std::string_view text) {
  std::set<std::string> seen;
  auto callback = [&seen](int depth, ordered_json::parse_event_t event, ordered_json& parsed) {
    if (depth == 1 && event == ordered_json::parse_event_t::key) {
      auto key = parsed.get<std::string>();
      if (!seen.insert(key).second) throw FormatError("duplicate tensor name: " + key);
    }
    return true;
  };
  try {
    return ordered_json::parse(text.begin(), text.end(), callback);
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("container header is not valid JSON: ") + e.what());
  }
}

}  // namespace

std::string dtype_name(DType dtype) { return dtype.kind == DType::Kind::f32 ? "F32" : "F16"; }

DType dtype_from_name(const std::string& name) {
  if (name == "F32") return DType::f32();
  if (name == "F16") return DType::f16();
  throw UnsupportedError("unsupported dtype: " + name);
}

std::size_t element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::size_t ModelWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

std::uint32_t f32_word(float value) { return std::bit_cast<std::uint32_t>(value); }
float f32_value(std::uint32_t word) { return std::bit_cast<float>(word); }

double f16_value(std::uint16_t word) {
  const int sign = (word >> 15) & 1;
  const int exponent = (word >> 10) & 0x1F;
  const int fraction = word & 0x3FF;
  double magnitude;
  if (exponent == 0) {
    magnitude = std::ldexp(static_cast<double>(fraction), -24);
  } else if (exponent == 0x1F) {
    magnitude = fraction == 0 ? INFINITY : NAN;
  } else {
    magnitude = std::ldexp(1.0 + fraction / 1024.0, exponent - 15);
  }
  return sign ? -magnitude : magnitude;
}

double word_value(std::uint32_t word, DType dtype) {
  if (dtype.kind == DType::Kind::f32) return f32_value(word);
  return f16_value(static_cast<std::uint16_t>(word));
}

bool word_is_finite(std::uint32_t word, DType dtype) {
  const int exponent_bits = dtype.bits - dtype.mantissa - 1;
  const std::uint32_t all_ones = (1u << exponent_bits) - 1u;
  return ((word >> dtype.mantissa) & all_ones) != all_ones;
}

std::size_t count_non_finite(const WeightTensor& tensor) {
  return static_cast<std::size_t>(std::count_if(tensor.bits.begin(), tensor.bits.end(), [&](std::uint32_t w) {
    return !word_is_finite(w, tensor.dtype);
  }));
}

WeightTensor read_raw(std::span<const std::uint8_t> bytes, DType dtype) {
  const std::size_t width = dtype.word_bytes();
  if (bytes.size() % width != 0) {
    throw FormatError("raw weight data of " + std::to_string(bytes.size()) + " bytes is not a multiple of " +
                      std::to_string(width));
  }
  WeightTensor tensor;
  tensor.dtype = dtype;
  tensor.shape = {bytes.size() / width};
  tensor.bits.reserve(bytes.size() / width);
  for (std::size_t i = 0; i < bytes.size(); i += width) tensor.bits.push_back(load_word(bytes.data() + i, width));
  return tensor;
}

std::vector<std::uint8_t> write_raw(const WeightTensor& tensor) {
  std::vector<std::uint8_t> out;
  out.reserve(tensor.size() * tensor.dtype.word_bytes());
  for (auto w : tensor.bits) store_word(w, tensor.dtype.word_bytes(), out);
  return out;
}

ModelWeights read_container(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("container truncated: missing header length");
  const std::uint64_t header_len = load_u64(bytes.data());
  if (header_len > bytes.size() - 8) {
    throw FormatError("container truncated: header declares " + std::to_string(header_len) + " bytes");
  }
  const std::string_view header_text(reinterpret_cast<const char*>(bytes.data() + 8), header_len);
  const ordered_json header = parse_header(header_text);
  if (!header.is_object()) throw FormatError("container header must be a JSON object");

  const auto buffer = bytes.subspan(8 + header_len);

  ModelWeights model;
  struct Extent {
    std::size_t begin, end;
  };
  std::vector<Extent> extents;

  for (const auto& [name, entry] : header.items()) {
    if (name == kMetadataKey) {
      if (!entry.is_object()) throw FormatError("__metadata__ must be an object");
      for (const auto& [k, v] : entry.items()) {
        if (!v.is_string()) throw FormatError("__metadata__ values must be strings");
        model.metadata[k] = v.get<std::string>();
      }
      continue;
    }
    if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") || !entry.contains("data_offsets")) {
      throw FormatError("tensor '" + name + "': expected {dtype, shape, data_offsets}");
    }
    if (!entry["dtype"].is_string()) throw FormatError("tensor '" + name + "': dtype must be a string");
    WeightTensor tensor;
    tensor.name = name;
    tensor.dtype = dtype_from_name(entry["dtype"].get<std::string>());

    const auto& shape = entry["shape"];
    if (!shape.is_array()) throw FormatError("tensor '" + name + "': shape must be an array");
    for (const auto& d : shape) tensor.shape.push_back(checked_index(d, "tensor '" + name + "' shape"));

    const auto& offsets = entry["data_offsets"];
    if (!offsets.is_array() || offsets.size() != 2) {
      throw FormatError("tensor '" + name + "': data_offsets must be [begin, end]");
    }
    const std::size_t begin = checked_index(offsets[0], "tensor '" + name + "' data_offsets");
    const std::size_t end = checked_index(offsets[1], "tensor '" + name + "' data_offsets");
    if (end < begin) throw FormatError("tensor '" + name + "': data_offsets end before begin");
    const std::size_t width = tensor.dtype.word_bytes();
    if (end - begin != element_count(tensor.shape) * width) {
      throw FormatError("tensor '" + name + "': data_offsets span does not match shape");
    }
    if (end > buffer.size()) {
      throw FormatError("container truncated: tensor '" + name + "' needs " + std::to_string(end) +
                        " buffer bytes, " + std::to_string(buffer.size()) + " present");
    }
    tensor.bits.reserve(end - begin);
    for (std::size_t i = begin; i < end; i += width) tensor.bits.push_back(load_word(buffer.data() + i, width));
    extents.push_back({begin, end});
    model.tensors.push_back(std::move(tensor));
  }

  std::sort(extents.begin(), extents.end(), [](const Extent& a, const Extent& b) {
    return a.begin != b.begin ? a.begin < b.begin : a.end < b.end;
  });
  std::size_t cursor = 0;
  for (const auto& e : extents) {
    if (e.begin != cursor) throw FormatError("tensor data overlaps or leaves a gap in the buffer");
    cursor = e.end;
  }
  if (cursor != buffer.size()) throw FormatError("container has trailing bytes after the last tensor");
  return model;
}

std::vector<std::uint8_t> write_container(const ModelWeights& model) {
  ordered_json header = ordered_json::object();
  if (!model.metadata.empty()) {
    ordered_json meta = ordered_json::object();
    for (const auto& [k, v] : model.metadata) meta[k] = v;
    header[kMetadataKey] = std::move(meta);
  }
  std::set<std::string> names;
  std::size_t offset = 0;
  for (const auto& t : model.tensors) {
    if (!names.insert(t.name).second) throw ArgumentError("duplicate tensor name: " + t.name);
    if (t.name == kMetadataKey) throw ArgumentError("tensor name is reserved: " + t.name);
    if (element_count(t.shape) != t.size()) throw ArgumentError("tensor '" + t.name + "': shape does not match data");
    const std::size_t end = offset + t.size() * t.dtype.word_bytes();
    header[t.name] = {{"dtype", dtype_name(t.dtype)}, {"shape", t.shape}, {"data_offsets", {offset, end}}};
    offset = end;
  }
  std::string text = header.dump();
  // Pad with spaces so the buffer starts 8-byte aligned, like safetensors.
  text.append((8 - text.size() % 8) % 8, ' ');

  std::vector<std::uint8_t> out;
  out.reserve(8 + text.size() + offset);
  const std::uint64_t n = text.size();
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& t : model.tensors) {
    for (auto w : t.bits) store_word(w, t.dtype.word_bytes(), out);
  }
  return out;
}

WeightTensor flatten(const ModelWeights& model) {
  WeightTensor flat;
  if (!model.tensors.empty()) flat.dtype = model.tensors.front().dtype;
  for (const auto& t : model.tensors) {
    if (t.dtype != flat.dtype) throw ArgumentError("cannot flatten a model with mixed dtypes");
    flat.bits.insert(flat.bits.end(), t.bits.begin(), t.bits.end());
  }
  flat.shape = {flat.bits.size()};
  return flat;
}

ModelWeights unflatten(const WeightTensor& flat, const ModelWeights& layout) {
  if (flat.size() != layout.parameter_count()) throw ArgumentError("flat tensor size does not match model layout");
  ModelWeights out = layout;
  auto it = flat.bits.begin();
  for (auto& t : out.tensors) {
    if (t.dtype != flat.dtype) throw ArgumentError("flat tensor dtype does not match model layout");
    std::copy_n(it, t.size(), t.bits.begin());
    it += static_cast<std::ptrdiff_t>(t.size());
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

ModelWeights load_model(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto ext = path.extension().string();
  ModelWeights model;
  if (ext == ".f32" || ext == ".f16") {
    auto tensor = read_raw(bytes, ext == ".f32" ? DType::f32() : DType::f16());
    tensor.name = "weights";
    model.tensors.push_back(std::move(tensor));
  } else {
    model = read_container(bytes);
  }
  model.source_path = path.string();
  return model;
}

void save_model(const ModelWeights& model, const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".f32" || ext == ".f16") {
    const auto flat = flatten(model);
    if ((ext == ".f32") != (flat.dtype == DType::f32())) throw ArgumentError("file extension does not match dtype");
    write_file(path, write_raw(flat));
  } else {
    write_file(path, write_container(model));
  }
}

}  // namespace wsteg
