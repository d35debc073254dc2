#pragma once

// Reader/writer for single-file named-tensor containers in the safetensors
// layout: u64 little-endian header length N, N bytes of JSON, then the data
// region. Only metadata is parsed; tensor data is streamed on demand.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "cocola/error.hpp"

namespace cocola {

static_assert(std::endian::native == std::endian::little, "container I/O assumes a little-endian host");

enum class DType { F64, F32, F16, BF16, I64, I32, I16, I8, U8, BOOL };

inline std::size_t element_size(DType t) {
  switch (t) {
    case DType::F64:
    case DType::I64: return 8;
    case DType::F32:
    case DType::I32: return 4;
    case DType::F16:
    case DType::BF16:
    case DType::I16: return 2;
    case DType::I8:
    case DType::U8:
    case DType::BOOL: return 1;
  }
  return 0;
}

inline std::string_view to_string(DType t) {
  switch (t) {
    case DType::F64: return "F64";
    case DType::F32: return "F32";
    case DType::F16: return "F16";
    case DType::BF16: return "BF16";
    case DType::I64: return "I64";
    case DType::I32: return "I32";
    case DType::I16: return "I16";
    case DType::I8: return "I8";
    case DType::U8: return "U8";
    case DType::BOOL: return "BOOL";
  }
  return "?";
}

inline std::optional<DType> parse_dtype(std::string_view s) {
  static const std::map<std::string_view, DType> table{
      {"F64", DType::F64}, {"F32", DType::F32}, {"F16", DType::F16}, {"BF16", DType::BF16}, {"I64", DType::I64},
      {"I32", DType::I32}, {"I16", DType::I16}, {"I8", DType::I8},   {"U8", DType::U8},     {"BOOL", DType::BOOL}};
  auto it = table.find(s);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

// ---------- half precision ----------

inline float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {  // subnormal: renormalize
      exp = 127 - 15 + 1;
      while ((mant & 0x400u) == 0) {
        mant <<= 1;
        --exp;
      }
      mant &= 0x3FFu;
      bits = sign | (exp << 23) | (mant << 13);
    }
  } else if (exp == 0x1F) {
    bits = sign | 0x7F800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

/// Round-to-nearest-even float to IEEE binary16.
inline std::uint16_t float_to_half(float f) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  const std::uint16_t sign = static_cast<std::uint16_t>((x >> 16) & 0x8000u);
  const std::uint32_t abs = x & 0x7FFFFFFFu;
  if (abs >= 0x7F800000u) {  // inf or nan
    return static_cast<std::uint16_t>(sign | 0x7C00u | (abs > 0x7F800000u ? 0x200u : 0u));
  }
  if (abs >= 0x477FF000u) return static_cast<std::uint16_t>(sign | 0x7C00u);  // overflow to inf
  if (abs < 0x38800000u) {                                                     // subnormal or zero
    if (abs < 0x33000000u) return sign;
    const std::uint32_t e = abs >> 23;
    const std::uint32_t m = (abs & 0x7FFFFFu) | 0x800000u;
    const std::uint32_t shift = 126 - e;  // half subnormal ulp is 2^-24
    std::uint32_t half_m = m >> shift;
    const std::uint32_t rem = m & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (half_m & 1u))) ++half_m;
    return static_cast<std::uint16_t>(sign | half_m);
  }
  std::uint32_t h = ((abs >> 13) - ((127u - 15u) << 10));
  const std::uint32_t rem = abs & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (h & 1u))) ++h;
  return static_cast<std::uint16_t>(sign | h);
}

inline float bf16_to_float(std::uint16_t b) { return std::bit_cast<float>(static_cast<std::uint32_t>(b) << 16); }

inline std::uint16_t float_to_bf16(float f) {
  std::uint32_t x = std::bit_cast<std::uint32_t>(f);
  if ((x & 0x7FFFFFFFu) > 0x7F800000u) return static_cast<std::uint16_t>((x >> 16) | 0x40u);
  x += 0x7FFFu + ((x >> 16) & 1u);
  return static_cast<std::uint16_t>(x >> 16);
}

/// Decodes one little-endian element of type `t`.
inline double load_element(const unsigned char* p, DType t) {
  switch (t) {
    case DType::F64: { double v; std::memcpy(&v, p, 8); return v; }
    case DType::F32: { float v; std::memcpy(&v, p, 4); return v; }
    case DType::F16: { std::uint16_t v; std::memcpy(&v, p, 2); return half_to_float(v); }
    case DType::BF16: { std::uint16_t v; std::memcpy(&v, p, 2); return bf16_to_float(v); }
    case DType::I64: { std::int64_t v; std::memcpy(&v, p, 8); return static_cast<double>(v); }
    case DType::I32: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case DType::I16: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case DType::I8: return static_cast<std::int8_t>(*p);
    case DType::U8: return *p;
    case DType::BOOL: return *p != 0 ? 1.0 : 0.0;
  }
  return 0.0;
}

// ---------- manifest ----------

struct TensorMeta {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::uint64_t> shape;
  /// Absolute file offset of the first byte of the tensor.
  std::uint64_t byte_offset = 0;
  std::uint64_t byte_length = 0;

  std::uint64_t element_count() const {
    std::uint64_t n = 1;
    for (auto d : shape) n *= d;
    return n;
  }
};

struct Manifest {
  std::filesystem::path path;
  std::uint64_t header_length = 0;
  std::uint64_t data_start = 0;
  std::uint64_t data_length = 0;
  std::vector<TensorMeta> tensors;  // sorted by name
  std::map<std::string, std::string> metadata;

  const TensorMeta* find(std::string_view name) const {
    auto it = std::lower_bound(tensors.begin(), tensors.end(), name,
                               [](const TensorMeta& t, std::string_view n) { return t.name < n; });
    return (it != tensors.end() && it->name == name) ? &*it : nullptr;
  }
};

/// Parses a container header. `data_length`, when known, bounds every tensor.
inline Manifest parse_header(std::string_view header_json, std::optional<std::uint64_t> data_length,
                             const std::string& source = "<header>") {
  Manifest m;
  m.header_length = header_json.size();
  m.data_start = 8 + header_json.size();
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(header_json);
  } catch (const nlohmann::json::parse_error& e) {
    throw ContainerError(std::string("header is not valid JSON: ") + e.what(), ErrorContext{source, {}, {}});
  }
  if (!j.is_object()) throw ContainerError("header is not a JSON object", ErrorContext{source, {}, {}});

  std::uint64_t max_end = 0;
  for (auto& [name, entry] : j.items()) {
    ErrorContext ctx{source, {}, name};
    if (name == "__metadata__") {
      if (!entry.is_object()) throw ContainerError("__metadata__ must be an object", ctx);
      for (auto& [k, v] : entry.items()) {
        if (!v.is_string()) throw ContainerError("__metadata__ values must be strings", ctx);
        m.metadata[k] = v.get<std::string>();
      }
      continue;
    }
    if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
        !entry.contains("data_offsets")) {
      throw ContainerError("tensor entry needs dtype, shape and data_offsets", ctx);
    }
    TensorMeta t;
    t.name = name;
    if (!entry["dtype"].is_string()) throw ContainerError("dtype must be a string", ctx);
    const auto dtype_name = entry["dtype"].get<std::string>();
    auto dtype = parse_dtype(dtype_name);
    if (!dtype) throw ContainerError("unknown dtype '" + dtype_name + "'", ctx);
    t.dtype = *dtype;
    const auto& shape = entry["shape"];
    if (!shape.is_array()) throw ContainerError("shape must be an array", ctx);
    for (const auto& d : shape) {
      if (!d.is_number_unsigned() && !(d.is_number_integer() && d.get<std::int64_t>() >= 0)) {
        throw ContainerError("shape entries must be non-negative integers", ctx);
      }
      t.shape.push_back(d.get<std::uint64_t>());
    }
    const auto& off = entry["data_offsets"];
    if (!off.is_array() || off.size() != 2 || !off[0].is_number_integer() || !off[1].is_number_integer()) {
      throw ContainerError("data_offsets must be [begin, end]", ctx);
    }
    const auto begin = off[0].get<std::uint64_t>();
    const auto end = off[1].get<std::uint64_t>();
    if (end < begin) throw ContainerError("data_offsets end precedes begin", ctx);
    t.byte_offset = m.data_start + begin;
    t.byte_length = end - begin;
    if (t.byte_length != element_size(t.dtype) * t.element_count()) {
      throw ContainerError("byte length " + std::to_string(t.byte_length) + " does not match dtype and shape (" +
                               std::to_string(element_size(t.dtype) * t.element_count()) + ")",
                           ctx);
    }
    if (data_length && end > *data_length) {
      throw ContainerError("tensor extends past the end of the data region", ctx);
    }
    max_end = std::max(max_end, end);
    m.tensors.push_back(std::move(t));
  }

  auto by_offset = m.tensors;
  std::sort(by_offset.begin(), by_offset.end(),
            [](const TensorMeta& a, const TensorMeta& b) { return a.byte_offset < b.byte_offset; });
  for (std::size_t i = 1; i < by_offset.size(); ++i) {
    const auto& prev = by_offset[i - 1];
    if (prev.byte_offset + prev.byte_length > by_offset[i].byte_offset) {
      throw ContainerError("data overlaps tensor '" + prev.name + "'", ErrorContext{source, {}, by_offset[i].name});
    }
  }
  std::sort(m.tensors.begin(), m.tensors.end(),
            [](const TensorMeta& a, const TensorMeta& b) { return a.name < b.name; });
  m.data_length = data_length.value_or(max_end);
  return m;
}

/// Reads only the header of a container file.
inline Manifest read_manifest(const std::filesystem::path& path) {
  const std::string source = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError("cannot open container", ErrorContext{source, {}, {}});
  std::error_code ec;
  const std::uint64_t file_size = std::filesystem::file_size(path, ec);
  if (ec) throw ContainerError("cannot stat container: " + ec.message(), ErrorContext{source, {}, {}});
  if (file_size < 8) throw ContainerError("file shorter than the 8-byte header length", ErrorContext{source, {}, {}});
  unsigned char len_bytes[8];
  in.read(reinterpret_cast<char*>(len_bytes), 8);
  std::uint64_t n = 0;
  for (int i = 7; i >= 0; --i) n = (n << 8) | len_bytes[i];
  if (n > file_size - 8) {
    throw ContainerError("header length " + std::to_string(n) + " exceeds file size " + std::to_string(file_size),
                         ErrorContext{source, {}, {}});
  }
  std::string header(n, '\0');
  in.read(header.data(), static_cast<std::streamsize>(n));
  if (!in) throw ContainerError("truncated header", ErrorContext{source, {}, {}});
  Manifest m = parse_header(header, file_size - 8 - n, source);
  m.path = path;
  return m;
}

/// Manifest from a standalone header JSON file (no tensor data). Offsets are
/// validated against each other only.
inline Manifest read_header_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError("cannot open header file", ErrorContext{path.string(), {}, {}});
  std::ostringstream text;
  text << in.rdbuf();
  Manifest m = parse_header(text.str(), std::nullopt, path.string());
  m.path = path;
  return m;
}

/// Container file, or a header JSON file when the extension is ".json".
inline Manifest read_any_manifest(const std::filesystem::path& path) {
  return path.extension() == ".json" ? read_header_json(path) : read_manifest(path);
}

// ---------- writer ----------

struct TensorData {
  std::string name;
  DType dtype = DType::F32;
  std::vector<std::uint64_t> shape;
  std::vector<unsigned char> bytes;
};

template <class T>
TensorData make_tensor(std::string name, DType dtype, std::vector<std::uint64_t> shape, std::span<const T> values) {
  TensorData t{std::move(name), dtype, std::move(shape), {}};
  t.bytes.resize(values.size_bytes());
  std::memcpy(t.bytes.data(), values.data(), values.size_bytes());
  return t;
}

/// Writes tensors in name order; the header is space padded to a multiple of 8 bytes.
inline void write_container(const std::filesystem::path& path, std::span<const TensorData> tensors,
                            const std::map<std::string, std::string>& metadata = {}) {
  std::vector<const TensorData*> sorted;
  for (const auto& t : tensors) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(), [](auto* a, auto* b) { return a->name < b->name; });

  nlohmann::json header = nlohmann::json::object();
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::uint64_t offset = 0;
  for (const auto* t : sorted) {
    std::uint64_t n = 1;
    for (auto d : t->shape) n *= d;
    if (n * element_size(t->dtype) != t->bytes.size()) {
      throw ContainerError("tensor byte size does not match dtype and shape", ErrorContext{path.string(), {}, t->name});
    }
    header[t->name] = {{"dtype", std::string(to_string(t->dtype))},
                       {"shape", t->shape},
                       {"data_offsets", {offset, offset + t->bytes.size()}}};
    offset += t->bytes.size();
  }
  std::string text = header.dump();
  while (text.size() % 8 != 0) text.push_back(' ');

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContainerError("cannot write container", ErrorContext{path.string(), {}, {}});
  std::uint64_t n = text.size();
  unsigned char len_bytes[8];
  for (int i = 0; i < 8; ++i) len_bytes[i] = static_cast<unsigned char>((n >> (8 * i)) & 0xFFu);
  out.write(reinterpret_cast<const char*>(len_bytes), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto* t : sorted) out.write(reinterpret_cast<const char*>(t->bytes.data()), static_cast<std::streamsize>(t->bytes.size()));
  if (!out) throw ContainerError("write failed", ErrorContext{path.string(), {}, {}});
}

}  // namespace cocola
