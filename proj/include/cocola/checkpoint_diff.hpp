#pragma once

// Per-parameter mean absolute update between two checkpoints, aggregated into
// a (module kind x layer) matrix.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cocola/error.hpp"
#include "cocola/format.hpp"
#include "cocola/naming_scheme.hpp"
#include "cocola/safetensors.hpp"

namespace cocola {

struct DiffEntry {
  std::string name;
  std::optional<int> layer;
  ModuleKind kind = ModuleKind::other;
  double mean_abs_delta = 0.0;
  std::uint64_t n = 0;
};

/// Neumaier-compensated sum of non-negative doubles.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      carry_ += (sum_ - t) + x;
    } else {
      carry_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + carry_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

inline constexpr std::size_t kDefaultChunkElements = std::size_t{1} << 16;

/// Streams two tensors in fixed-size chunks and returns mean |p - f|. Elements
/// are widened to double before subtraction.
inline DiffEntry diff_tensor(const TensorMeta& meta_p, std::istream& data_p, const TensorMeta& meta_f,
                             std::istream& data_f, std::size_t chunk_elements = kDefaultChunkElements) {
  const ErrorContext ctx{{}, {}, meta_p.name};
  if (meta_p.shape != meta_f.shape) throw ContainerError("shape mismatch between checkpoints", ctx);
  if (meta_p.dtype != meta_f.dtype) {
    throw ContainerError("dtype mismatch: " + std::string(to_string(meta_p.dtype)) + " vs " +
                             std::string(to_string(meta_f.dtype)),
                         ctx);
  }
  if (chunk_elements == 0) chunk_elements = kDefaultChunkElements;

  const std::size_t esize = element_size(meta_p.dtype);
  const std::uint64_t n = meta_p.element_count();
  data_p.seekg(static_cast<std::streamoff>(meta_p.byte_offset));
  data_f.seekg(static_cast<std::streamoff>(meta_f.byte_offset));
  std::vector<unsigned char> buf_p(chunk_elements * esize), buf_f(chunk_elements * esize);

  CompensatedSum sum;
  for (std::uint64_t done = 0; done < n;) {
    const std::size_t count = static_cast<std::size_t>(std::min<std::uint64_t>(chunk_elements, n - done));
    const auto bytes = static_cast<std::streamsize>(count * esize);
    data_p.read(reinterpret_cast<char*>(buf_p.data()), bytes);
    data_f.read(reinterpret_cast<char*>(buf_f.data()), bytes);
    if (data_p.gcount() != bytes || data_f.gcount() != bytes) throw ContainerError("truncated tensor data", ctx);
    for (std::size_t i = 0; i < count; ++i) {
      const double a = load_element(buf_p.data() + i * esize, meta_p.dtype);
      const double b = load_element(buf_f.data() + i * esize, meta_f.dtype);
      sum.add(std::fabs(a - b));
    }
    done += count;
  }

  DiffEntry e;
  e.name = meta_p.name;
  e.n = n;
  e.mean_abs_delta = n == 0 ? 0.0 : sum.value() / static_cast<double>(n);
  return e;
}

/// Mean update per (module kind, layer) cell, element-weighted across the
/// tensors in a cell. Rows are the module kinds present, in canonical order.
class DiffMatrix {
 public:
  DiffMatrix() = default;
  DiffMatrix(std::vector<ModuleKind> kinds, int layer_count)
      : kinds_(std::move(kinds)),
        layer_count_(layer_count),
        values_(kinds_.size() * static_cast<std::size_t>(layer_count)),
        weights_(kinds_.size() * static_cast<std::size_t>(layer_count), 0) {}

  const std::vector<ModuleKind>& kinds() const noexcept { return kinds_; }
  int layer_count() const noexcept { return layer_count_; }
  bool empty() const noexcept { return kinds_.empty() || layer_count_ == 0; }

  bool has_kind(ModuleKind k) const { return row(k).has_value(); }

  std::optional<double> at(ModuleKind k, int layer) const {
    auto r = row(k);
    if (!r || layer < 0 || layer >= layer_count_) return std::nullopt;
    return values_[index(*r, layer)];
  }

  std::uint64_t weight(ModuleKind k, int layer) const {
    auto r = row(k);
    if (!r || layer < 0 || layer >= layer_count_) return 0;
    return weights_[index(*r, layer)];
  }

  void set(ModuleKind k, int layer, std::optional<double> value, std::uint64_t weight = 0) {
    auto r = row(k);
    if (!r || layer < 0 || layer >= layer_count_) throw PreconditionError("cell outside the matrix");
    values_[index(*r, layer)] = value;
    weights_[index(*r, layer)] = weight;
  }

  /// Smallest and largest defined cell values.
  std::optional<std::pair<double, double>> range() const {
    std::optional<std::pair<double, double>> out;
    for (const auto& v : values_) {
      if (!v) continue;
      if (!out) {
        out = std::make_pair(*v, *v);
      } else {
        out->first = std::min(out->first, *v);
        out->second = std::max(out->second, *v);
      }
    }
    return out;
  }

 private:
  std::optional<std::size_t> row(ModuleKind k) const {
    auto it = std::find(kinds_.begin(), kinds_.end(), k);
    if (it == kinds_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - kinds_.begin());
  }
  std::size_t index(std::size_t r, int layer) const {
    return r * static_cast<std::size_t>(layer_count_) + static_cast<std::size_t>(layer);
  }

  std::vector<ModuleKind> kinds_;
  int layer_count_ = 0;
  std::vector<std::optional<double>> values_;
  std::vector<std::uint64_t> weights_;
};

/// Cells hold Σ(delta_i · n_i) / Σ n_i over layered entries. Entries without a
/// layer index do not enter the matrix. `layer_count` defaults to max layer + 1.
inline DiffMatrix build_matrix(std::span<const DiffEntry> entries, std::optional<int> layer_count = std::nullopt) {
  int layers = layer_count.value_or(0);
  std::vector<ModuleKind> kinds;
  for (const auto& e : entries) {
    if (!e.layer) continue;
    if (!layer_count) layers = std::max(layers, *e.layer + 1);
    if (std::find(kinds.begin(), kinds.end(), e.kind) == kinds.end()) kinds.push_back(e.kind);
  }
  std::sort(kinds.begin(), kinds.end());

  DiffMatrix m(kinds, layers);
  std::map<std::pair<ModuleKind, int>, std::pair<long double, std::uint64_t>> acc;
  for (const auto& e : entries) {
    if (!e.layer || e.n == 0) continue;
    if (*e.layer >= layers) {
      throw PreconditionError("entry layer " + std::to_string(*e.layer) + " outside layer count " +
                              std::to_string(layers), ErrorContext{{}, {}, e.name});
    }
    auto& [sum, weight] = acc[{e.kind, *e.layer}];
    sum += static_cast<long double>(e.mean_abs_delta) * static_cast<long double>(e.n);
    weight += e.n;
  }
  for (const auto& [key, sw] : acc) {
    m.set(key.first, key.second, static_cast<double>(sw.first / static_cast<long double>(sw.second)), sw.second);
  }
  return m;
}

struct DiffResult {
  std::vector<DiffEntry> entries;  // sorted by name
  DiffMatrix matrix;
};

struct DiffOptions {
  unsigned threads = 0;  // 0: hardware concurrency
  std::size_t chunk_elements = kDefaultChunkElements;
};

/// Diffs every tensor of two single-file checkpoints with a bounded worker pool.
inline DiffResult diff_checkpoints(const Manifest& base, const Manifest& tuned, const NamingScheme& scheme,
                                   const DiffOptions& options = {}) {
  for (const auto& t : base.tensors) {
    if (!tuned.find(t.name)) throw ContainerError("tensor missing from tuned checkpoint", ErrorContext{tuned.path.string(), {}, t.name});
  }
  for (const auto& t : tuned.tensors) {
    if (!base.find(t.name)) throw ContainerError("tensor missing from base checkpoint", ErrorContext{base.path.string(), {}, t.name});
  }
  std::vector<std::string> names;
  for (const auto& t : base.tensors) names.push_back(t.name);
  scheme.validate(names);

  std::vector<DiffEntry> entries(base.tensors.size());
  unsigned workers = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, std::max<std::size_t>(1, entries.size()));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    try {
      std::ifstream in_p(base.path, std::ios::binary), in_f(tuned.path, std::ios::binary);
      if (!in_p) throw ContainerError("cannot open container", ErrorContext{base.path.string(), {}, {}});
      if (!in_f) throw ContainerError("cannot open container", ErrorContext{tuned.path.string(), {}, {}});
      for (std::size_t i = next++; i < entries.size(); i = next++) {
        const TensorMeta& p = base.tensors[i];
        DiffEntry e = diff_tensor(p, in_p, *tuned.find(p.name), in_f, options.chunk_elements);
        const ParameterClass c = scheme.classify(p.name);
        e.layer = c.layer;
        e.kind = c.kind;
        entries[i] = std::move(e);
      }
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next = entries.size();
    }
  };
  std::vector<std::thread> pool;
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  DiffResult result;
  result.matrix = build_matrix(entries);
  result.entries = std::move(entries);
  return result;
}

// ---------- CSV ----------

/// Header "module_kind,layer_1,...,layer_L" (1-indexed); empty cells have no tensors.
inline void write_matrix_csv(std::ostream& out, const DiffMatrix& m) {
  out << "module_kind";
  for (int l = 0; l < m.layer_count(); ++l) out << ",layer_" << (l + 1);
  out << '\n';
  for (auto k : m.kinds()) {
    out << to_string(k);
    for (int l = 0; l < m.layer_count(); ++l) {
      out << ',';
      if (auto v = m.at(k, l)) out << format_full_precision(*v);
    }
    out << '\n';
  }
}

inline DiffMatrix read_matrix_csv(std::istream& in, const std::string& source = "<matrix>") {
  std::string line;
  std::size_t lineno = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(s);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!s.empty() && s.back() == ',') cells.emplace_back();
    return cells;
  };
  if (!std::getline(in, line)) throw IngestError("empty matrix CSV", ErrorContext{source, 1, {}});
  ++lineno;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line);
  if (header.empty() || header[0] != "module_kind") {
    throw IngestError("matrix CSV must start with a 'module_kind' header", ErrorContext{source, lineno, {}});
  }
  const int layers = static_cast<int>(header.size()) - 1;
  std::vector<std::pair<ModuleKind, std::vector<std::string>>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split(line);
    auto kind = parse_module_kind(cells[0]);
    if (!kind) throw IngestError("unknown module kind '" + cells[0] + "'", ErrorContext{source, lineno, {}});
    if (static_cast<int>(cells.size()) - 1 != layers) {
      throw IngestError("row has " + std::to_string(cells.size() - 1) + " cells, header has " + std::to_string(layers),
                        ErrorContext{source, lineno, {}});
    }
    cells.erase(cells.begin());
    rows.emplace_back(*kind, std::move(cells));
  }
  std::vector<ModuleKind> kinds;
  for (const auto& r : rows) kinds.push_back(r.first);
  DiffMatrix m(kinds, layers);
  for (const auto& [kind, cells] : rows) {
    for (int l = 0; l < layers; ++l) {
      if (cells[static_cast<std::size_t>(l)].empty()) continue;
      try {
        m.set(kind, l, std::stod(cells[static_cast<std::size_t>(l)]));
      } catch (const std::invalid_argument&) {
        throw IngestError("non-numeric cell '" + cells[static_cast<std::size_t>(l)] + "'", ErrorContext{source, {}, std::string(to_string(kind))});
      }
    }
  }
  return m;
}

inline DiffMatrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open matrix CSV", ErrorContext{path.string(), {}, {}});
  return read_matrix_csv(in, path.string());
}

/// One row per tensor: name, layer (1-indexed, empty if none), kind, mean_abs_delta, n.
inline void write_entries_csv(std::ostream& out, std::span<const DiffEntry> entries) {
  out << "name,layer,module_kind,mean_abs_delta,n\n";
  for (const auto& e : entries) {
    out << e.name << ',';
    if (e.layer) out << (*e.layer + 1);
    out << ',' << to_string(e.kind) << ',' << format_full_precision(e.mean_abs_delta) << ',' << e.n << '\n';
  }
}

}  // namespace cocola
