#pragma once

// Named-tensor container shared by feature files, checkpoints and inference
// outputs.
//
// Byte layout (all integers little-endian):
//   [0, 8)         uint64 header_len
//   [8, 8+len)     UTF-8 JSON header
//   [8+len, ...)   raw array payloads, concatenated in header order
//
// Header: {"format": "timbre-container", "version": 1, "fingerprint": str,
//          "meta": {...},
//          "arrays": [{"name", "dtype": "f32"|"f64"|"i32"|"u8",
//                      "shape": [...], "offset", "nbytes"}, ...]}
// `offset` is relative to the start of the payload section.

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace timbre::io {

enum class DType { kF32, kF64, kI32, kU8 };

std::string dtype_name(DType t);
size_t dtype_size(DType t);

class ContainerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FingerprintMismatch : public ContainerError {
 public:
  using ContainerError::ContainerError;
};

struct Array {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<int64_t> shape;
  std::vector<uint8_t> bytes;

  int64_t elements() const;
  template <typename T>
  std::span<const T> as() const {
    return {reinterpret_cast<const T*>(bytes.data()), bytes.size() / sizeof(T)};
  }
};

class Container {
 public:
  nlohmann::json meta = nlohmann::json::object();
  std::string fingerprint;

  void add(std::string name, DType dtype, std::vector<int64_t> shape, const void* data);
  template <typename T>
  void add(std::string name, std::vector<int64_t> shape, std::span<const T> data);

  bool contains(const std::string& name) const;
  const Array& get(const std::string& name) const;  // throws ContainerError
  template <typename T>
  std::vector<T> read(const std::string& name, std::vector<int64_t>* shape = nullptr) const;

  const std::vector<Array>& arrays() const { return arrays_; }

 private:
  std::vector<Array> arrays_;
};

// Atomic: writes `path.tmp` and renames over `path`.
void write_container(const Container& c, const std::filesystem::path& path);
Container read_container(const std::filesystem::path& path);
// Throws FingerprintMismatch unless the stored fingerprint equals `expected`.
Container read_container(const std::filesystem::path& path, const std::string& expected);

}  // namespace timbre::io
