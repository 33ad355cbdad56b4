#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include <nlohmann/json.hpp>

#include "crrt/nn/tensor.hpp"

namespace crrt::nn {

/// Named tensors plus free-form JSON metadata, stored as one file:
///
///   line 1   compact JSON manifest terminated by '\n'
///   rest     concatenated little-endian IEEE-754 payloads
///
/// The manifest lists every tensor's name, shape, element type ("f32"/"f64")
/// and byte offset relative to the start of the payload section. Tensors are
/// written in insertion order, so identical inputs give identical bytes.
class Checkpoint {
 public:
  static constexpr int kFormatVersion = 1;
  static constexpr const char* kFormatName = "crrt-checkpoint";

  struct Entry {
    std::string name;
    Shape shape;
    std::string dtype;
    std::vector<unsigned char> bytes;  // little-endian payload
  };

  nlohmann::json meta = nlohmann::json::object();

  template <class T>
  void put(const std::string& name, const Tensor<T>& t) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    Entry e{name, t.shape(), dtype_of<T>(), {}};
    e.bytes.resize(t.size() * sizeof(T));
    for (std::size_t i = 0; i < t.size(); ++i) store_le(t[i], e.bytes.data() + i * sizeof(T));
    if (index_.count(name)) throw ContractError("checkpoint: duplicate tensor " + name);
    index_[name] = entries_.size();
    entries_.push_back(std::move(e));
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  /// Loads a tensor, converting between f32 and f64 if needed.
  template <class T>
  Tensor<T> get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("checkpoint: missing tensor " + name);
    const Entry& e = entries_[it->second];
    const std::size_t n = shape_count(e.shape);
    Tensor<T> t(e.shape);
    if (e.dtype == "f32") {
      for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<T>(load_le<float>(e.bytes.data() + i * 4));
    } else {
      for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<T>(load_le<double>(e.bytes.data() + i * 8));
    }
    return t;
  }

  void save(const std::string& path) const {
    nlohmann::json manifest;
    manifest["format"] = kFormatName;
    manifest["version"] = kFormatVersion;
    manifest["meta"] = meta;
    auto tensors = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& e : entries_) {
      tensors.push_back({{"name", e.name}, {"shape", e.shape}, {"dtype", e.dtype}, {"offset", offset},
                         {"bytes", e.bytes.size()}});
      offset += e.bytes.size();
    }
    manifest["tensors"] = tensors;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open for writing", path);
    const std::string head = manifest.dump() + "\n";
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    for (const auto& e : entries_) out.write(reinterpret_cast<const char*>(e.bytes.data()), static_cast<std::streamsize>(e.bytes.size()));
    if (!out) throw DataError("write failed", path);
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint", path);
    std::string head;
    if (!std::getline(in, head)) throw DataError("empty checkpoint", path, 1);
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(head);
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(std::string("bad manifest: ") + ex.what(), path, 1);
    }
    if (manifest.value("format", "") != kFormatName) throw DataError("not a checkpoint file", path, 1);
    if (manifest.value("version", 0) != kFormatVersion) throw DataError("unsupported checkpoint version", path, 1);
    std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Checkpoint ck;
    ck.meta = manifest["meta"];
    for (const auto& t : manifest["tensors"]) {
      Entry e;
      e.name = t.at("name").get<std::string>();
      e.shape = t.at("shape").get<Shape>();
      e.dtype = t.at("dtype").get<std::string>();
      const auto off = t.at("offset").get<std::uint64_t>();
      const auto len = t.at("bytes").get<std::uint64_t>();
      const std::size_t width = e.dtype == "f32" ? 4 : e.dtype == "f64" ? 8 : 0;
      if (width == 0) throw DataError("unknown dtype " + e.dtype, path);
      if (len != shape_count(e.shape) * width || off + len > payload.size()) throw DataError("tensor " + e.name + " overruns payload", path);
      e.bytes.assign(payload.begin() + static_cast<std::ptrdiff_t>(off), payload.begin() + static_cast<std::ptrdiff_t>(off + len));
      ck.index_[e.name] = ck.entries_.size();
      ck.entries_.push_back(std::move(e));
    }
    return ck;
  }

 private:
  template <class T>
  static std::string dtype_of() {
    return std::is_same_v<T, float> ? "f32" : "f64";
  }

  template <class T>
  static void store_le(T v, unsigned char* dst) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U bits = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = static_cast<unsigned char>(bits >> (8 * i));
  }

  template <class T>
  static T load_le(const unsigned char* src) {
    using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(src[i]) << (8 * i);
    return std::bit_cast<T>(bits);
  }

  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace crrt::nn
