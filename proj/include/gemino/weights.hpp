#pragma once

// Named parameter storage. On disk a store is a pair of files:
//
//   <stem>.manifest   UTF-8 text, one record per line
//   <stem>.bin        little-endian IEEE-754 float32 values
//
// Manifest grammar (fields separated by single spaces):
//
//   gemino-weights <manifest_version>
//   blob <blob file name, relative to the manifest>
//   count <number of entries>
//   <name> f32 <byte offset> <rank> <dim0> ... <dim{rank-1}>     (count lines)
//
// Entries appear in lexicographic name order and are packed back to back in
// the blob in the same order. The blob length must equal the end of the last
// entry exactly.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "gemino/error.hpp"

namespace gemino {

struct WeightEntry {
  std::vector<int> shape;
  std::vector<float> values;
};

inline std::size_t shape_product(const std::vector<int>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t acc, int d) { return acc * static_cast<std::size_t>(d); });
}

inline std::string shape_to_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

class WeightStore {
 public:
  static constexpr int kManifestVersion = 1;

  void add(const std::string& name, std::vector<int> shape, std::vector<float> values) {
    if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos) {
      throw FormatError("invalid parameter name '" + name + "'");
    }
    if (std::any_of(shape.begin(), shape.end(), [](int d) { return d <= 0; })) {
      throw FormatError("parameter '" + name + "' has a non-positive dimension");
    }
    if (shape_product(shape) != values.size()) {
      throw FormatError("parameter '" + name + "' has " + std::to_string(values.size()) +
                        " values but shape " + shape_to_string(shape));
    }
    const auto [it, inserted] = entries_.try_emplace(name, WeightEntry{std::move(shape), std::move(values)});
    if (!inserted) throw FormatError("duplicate parameter name '" + name + "'");
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const WeightEntry& at(const std::string& name) const {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw FormatError("missing parameter '" + name + "'");
    return it->second;
  }

  /// Overwrites the values of an existing entry; the element count must not change.
  void assign(const std::string& name, std::vector<float> values) {
    const auto it = entries_.find(name);
    if (it == entries_.end()) throw FormatError("missing parameter '" + name + "'");
    if (values.size() != it->second.values.size()) {
      throw FormatError("parameter '" + name + "' expects " + std::to_string(it->second.values.size()) + " values");
    }
    it->second.values = std::move(values);
  }

  void fill(const std::string& name, float value) {
    assign(name, std::vector<float>(at(name).values.size(), value));
  }

  /// Removes an entry if present.
  void erase(const std::string& name) { entries_.erase(name); }

  /// Entry `name`, checked against the shape the caller's architecture expects.
  const WeightEntry& require(const std::string& name, const std::vector<int>& shape) const {
    const WeightEntry& e = at(name);
    if (e.shape != shape) {
      throw FormatError("parameter '" + name + "' has shape " + shape_to_string(e.shape) + ", expected " +
                        shape_to_string(shape));
    }
    return e;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t total_parameters() const noexcept {
    std::size_t n = 0;
    for (const auto& [_, e] : entries_) n += e.values.size();
    return n;
  }
  int manifest_version() const noexcept { return manifest_version_; }

  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  friend bool operator==(const WeightStore& a, const WeightStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (auto ia = a.entries_.begin(), ib = b.entries_.begin(); ia != a.entries_.end(); ++ia, ++ib) {
      if (ia->first != ib->first || ia->second.shape != ib->second.shape) return false;
      // Bitwise comparison so NaN payloads and signed zeros round-trip too.
      const auto& va = ia->second.values;
      const auto& vb = ib->second.values;
      for (std::size_t i = 0; i < va.size(); ++i) {
        if (std::bit_cast<std::uint32_t>(va[i]) != std::bit_cast<std::uint32_t>(vb[i])) return false;
      }
    }
    return true;
  }

 private:
  std::map<std::string, WeightEntry> entries_;
  int manifest_version_ = kManifestVersion;
};

inline std::filesystem::path blob_path_for(const std::filesystem::path& manifest_path) {
  auto blob = manifest_path;
  blob.replace_extension(".bin");
  return blob;
}

inline void save(const WeightStore& store, const std::filesystem::path& manifest_path) {
  const auto blob_path = blob_path_for(manifest_path);
  std::ofstream blob(blob_path, std::ios::binary | std::ios::trunc);
  if (!blob) throw Error("cannot open '" + blob_path.string() + "' for writing");
  std::ostringstream manifest;
  manifest << "gemino-weights " << store.manifest_version() << "\n";
  manifest << "blob " << blob_path.filename().string() << "\n";
  manifest << "count " << store.size() << "\n";

  std::uint64_t offset = 0;
  std::vector<unsigned char> buffer;
  for (const auto& [name, entry] : store) {
    manifest << name << " f32 " << offset << " " << entry.shape.size();
    for (int d : entry.shape) manifest << " " << d;
    manifest << "\n";
    buffer.resize(entry.values.size() * 4);
    for (std::size_t i = 0; i < entry.values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(entry.values[i]);
      buffer[4 * i + 0] = static_cast<unsigned char>(bits);
      buffer[4 * i + 1] = static_cast<unsigned char>(bits >> 8);
      buffer[4 * i + 2] = static_cast<unsigned char>(bits >> 16);
      buffer[4 * i + 3] = static_cast<unsigned char>(bits >> 24);
    }
    blob.write(reinterpret_cast<const char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    offset += buffer.size();
  }
  if (!blob) throw Error("failed writing '" + blob_path.string() + "'");

  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) throw Error("cannot open '" + manifest_path.string() + "' for writing");
  out << manifest.str();
  if (!out) throw Error("failed writing '" + manifest_path.string() + "'");
}

inline WeightStore load(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("cannot open weight manifest '" + manifest_path.string() + "'");
  const auto fail = [&](const std::string& why) {
    throw FormatError("malformed weight manifest '" + manifest_path.string() + "': " + why);
  };

  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "gemino-weights") fail("missing 'gemino-weights' header");
  if (version != WeightStore::kManifestVersion) fail("unsupported version " + std::to_string(version));
  std::string blob_name;
  if (!(in >> tag >> blob_name) || tag != "blob") fail("missing 'blob' line");
  std::size_t count = 0;
  if (!(in >> tag >> count) || tag != "count") fail("missing 'count' line");

  struct Record {
    std::string name;
    std::uint64_t offset;
    std::vector<int> shape;
  };
  std::vector<Record> records;
  records.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Record r;
    std::string dtype;
    std::size_t rank = 0;
    if (!(in >> r.name >> dtype >> r.offset >> rank)) fail("truncated entry list at entry " + std::to_string(i));
    if (dtype != "f32") fail("parameter '" + r.name + "' has unsupported dtype '" + dtype + "'");
    if (rank == 0 || rank > 8) fail("parameter '" + r.name + "' has invalid rank");
    r.shape.resize(rank);
    for (auto& d : r.shape) {
      if (!(in >> d) || d <= 0) fail("parameter '" + r.name + "' has an invalid dimension");
    }
    records.push_back(std::move(r));
  }
  if (in >> tag) fail("unexpected trailing content '" + tag + "'");

  const auto blob_path = manifest_path.parent_path() / blob_name;
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw FormatError("cannot open weight blob '" + blob_path.string() + "'");
  blob.seekg(0, std::ios::end);
  const auto blob_size = static_cast<std::uint64_t>(blob.tellg());

  std::uint64_t expected_end = 0;
  for (const auto& r : records) {
    const std::uint64_t end = r.offset + shape_product(r.shape) * 4;
    if (end > blob_size) {
      throw FormatError("weight blob '" + blob_path.string() + "' is truncated inside parameter '" + r.name + "'");
    }
    expected_end = std::max(expected_end, end);
  }
  if (expected_end != blob_size) {
    throw FormatError("weight blob '" + blob_path.string() + "' has " + std::to_string(blob_size) +
                      " bytes, manifest describes " + std::to_string(expected_end));
  }

  WeightStore store;
  std::vector<unsigned char> buffer;
  for (auto& r : records) {
    const std::size_t n = shape_product(r.shape);
    buffer.resize(n * 4);
    blob.seekg(static_cast<std::streamoff>(r.offset));
    blob.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(buffer.size()));
    if (!blob) throw FormatError("short read in parameter '" + r.name + "'");
    std::vector<float> values(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t bits = static_cast<std::uint32_t>(buffer[4 * i]) |
                                 (static_cast<std::uint32_t>(buffer[4 * i + 1]) << 8) |
                                 (static_cast<std::uint32_t>(buffer[4 * i + 2]) << 16) |
                                 (static_cast<std::uint32_t>(buffer[4 * i + 3]) << 24);
      values[i] = std::bit_cast<float>(bits);
    }
    store.add(r.name, std::move(r.shape), std::move(values));  // rejects duplicates by name
  }
  return store;
}

// ---------------------------------------------------------------------------
// Architecture descriptions and deterministic initialization.

enum class ParamRole {
  conv_weight,     // uniform in +-sqrt(6 / fan_in)
  zeros,           // biases, normalization shifts and means
  ones,            // normalization scales and variances
  identity_2x2,    // repeated [1, 0, 0, 1] pattern (jacobian head bias)
};

struct ParamSpec {
  std::string name;
  std::vector<int> shape;
  ParamRole role = ParamRole::zeros;
  int fan_in = 1;
};

struct ArchitectureSpec {
  std::vector<ParamSpec> params;

  void add(std::string name, std::vector<int> shape, ParamRole role, int fan_in = 1) {
    params.push_back({std::move(name), std::move(shape), role, fan_in});
  }
  std::size_t total_parameters() const {
    std::size_t n = 0;
    for (const auto& p : params) n += shape_product(p.shape);
    return n;
  }
};

namespace detail {

// Uniform float in [0, 1) from the top 24 bits; independent of the standard
// library's distribution implementation.
inline float unit_float(std::mt19937_64& rng) {
  return static_cast<float>(rng() >> 40) * (1.0f / 16777216.0f);
}

}  // namespace detail

inline WeightStore random_init(const ArchitectureSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WeightStore store;
  for (const auto& p : spec.params) {
    const std::size_t n = shape_product(p.shape);
    std::vector<float> values(n, 0.0f);
    switch (p.role) {
      case ParamRole::conv_weight: {
        const float bound = std::sqrt(6.0f / static_cast<float>(std::max(p.fan_in, 1)));
        for (float& v : values) v = (2.0f * detail::unit_float(rng) - 1.0f) * bound;
        break;
      }
      case ParamRole::zeros:
        break;
      case ParamRole::ones:
        std::fill(values.begin(), values.end(), 1.0f);
        break;
      case ParamRole::identity_2x2:
        for (std::size_t i = 0; i < n; ++i) values[i] = (i % 4 == 0 || i % 4 == 3) ? 1.0f : 0.0f;
        break;
    }
    store.add(p.name, p.shape, std::move(values));
  }
  return store;
}

}  // namespace gemino
