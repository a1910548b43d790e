#include "timbre/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace timbre::io {

static_assert(std::endian::native == std::endian::little,
              "container payloads are written in host order and must be little-endian");

namespace {

constexpr const char* kFormat = "timbre-container";
constexpr int kVersion = 1;

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::kF32; }
template <>
constexpr DType dtype_of<double>() { return DType::kF64; }
template <>
constexpr DType dtype_of<int32_t>() { return DType::kI32; }
template <>
constexpr DType dtype_of<uint8_t>() { return DType::kU8; }

DType parse_dtype(const std::string& s) {
  if (s == "f32") return DType::kF32;
  if (s == "f64") return DType::kF64;
  if (s == "i32") return DType::kI32;
  if (s == "u8") return DType::kU8;
  throw ContainerError("corrupt header: unknown dtype '" + s + "'");
}

}  // namespace

std::string dtype_name(DType t) {
  switch (t) {
    case DType::kF32: return "f32";
    case DType::kF64: return "f64";
    case DType::kI32: return "i32";
    case DType::kU8: return "u8";
  }
  return "?";
}

size_t dtype_size(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kI32: return 4;
    case DType::kU8: return 1;
  }
  return 0;
}

int64_t Array::elements() const {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

void Container::add(std::string name, DType dtype, std::vector<int64_t> shape, const void* data) {
  if (contains(name)) throw ContainerError("duplicate array '" + name + "'");
  Array a{std::move(name), dtype, std::move(shape), {}};
  for (int64_t d : a.shape) {
    if (d < 0) throw ContainerError("negative dimension in '" + a.name + "'");
  }
  const size_t nbytes = static_cast<size_t>(a.elements()) * dtype_size(dtype);
  a.bytes.resize(nbytes);
  if (nbytes) std::memcpy(a.bytes.data(), data, nbytes);
  arrays_.push_back(std::move(a));
}

template <typename T>
void Container::add(std::string name, std::vector<int64_t> shape, std::span<const T> data) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  if (n != static_cast<int64_t>(data.size())) {
    throw ContainerError("array '" + name + "': shape does not match data size");
  }
  add(std::move(name), dtype_of<T>(), std::move(shape), data.data());
}

bool Container::contains(const std::string& name) const {
  for (const auto& a : arrays_)
    if (a.name == name) return true;
  return false;
}

const Array& Container::get(const std::string& name) const {
  for (const auto& a : arrays_)
    if (a.name == name) return a;
  throw ContainerError("missing array '" + name + "'");
}

template <typename T>
std::vector<T> Container::read(const std::string& name, std::vector<int64_t>* shape) const {
  const Array& a = get(name);
  if (a.dtype != dtype_of<T>()) {
    throw ContainerError("array '" + name + "' has dtype " + dtype_name(a.dtype));
  }
  if (shape) *shape = a.shape;
  auto s = a.as<T>();
  return {s.begin(), s.end()};
}

void write_container(const Container& c, const std::filesystem::path& path) {
  nlohmann::json header = {{"format", kFormat},
                           {"version", kVersion},
                           {"fingerprint", c.fingerprint},
                           {"meta", c.meta},
                           {"arrays", nlohmann::json::array()}};
  uint64_t offset = 0;
  for (const auto& a : c.arrays()) {
    header["arrays"].push_back({{"name", a.name},
                                {"dtype", dtype_name(a.dtype)},
                                {"shape", a.shape},
                                {"offset", offset},
                                {"nbytes", a.bytes.size()}});
    offset += a.bytes.size();
  }
  const std::string text = header.dump();
  const uint64_t len = text.size();

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ContainerError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& a : c.arrays()) {
      out.write(reinterpret_cast<const char*>(a.bytes.data()),
                static_cast<std::streamsize>(a.bytes.size()));
    }
    out.flush();
    if (!out) throw ContainerError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Container read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContainerError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto file_size = static_cast<uint64_t>(in.tellg());
  in.seekg(0);
  uint64_t len = 0;
  if (file_size < sizeof len || !in.read(reinterpret_cast<char*>(&len), sizeof len) ||
      len > file_size - sizeof len) {
    throw ContainerError("corrupt header: bad length in " + path.string());
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ContainerError("corrupt header in " + path.string() + ": " + e.what());
  }
  Container c;
  try {
    if (header.at("format") != kFormat) throw ContainerError("corrupt header: wrong format tag");
    if (header.at("version").get<int>() != kVersion) {
      throw ContainerError("unsupported container version");
    }
    c.fingerprint = header.at("fingerprint").get<std::string>();
    c.meta = header.at("meta");
    const uint64_t payload = sizeof len + len;
    for (const auto& e : header.at("arrays")) {
      const DType dtype = parse_dtype(e.at("dtype").get<std::string>());
      auto shape = e.at("shape").get<std::vector<int64_t>>();
      const auto offset = e.at("offset").get<uint64_t>();
      const auto nbytes = e.at("nbytes").get<uint64_t>();
      int64_t n = 1;
      for (int64_t d : shape) n *= d;
      if (n < 0 || static_cast<uint64_t>(n) * dtype_size(dtype) != nbytes ||
          payload + offset + nbytes > file_size) {
        throw ContainerError("corrupt header: array '" + e.at("name").get<std::string>() +
                             "' out of bounds");
      }
      std::vector<uint8_t> bytes(nbytes);
      in.seekg(static_cast<std::streamoff>(payload + offset));
      in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(nbytes));
      c.add(e.at("name").get<std::string>(), dtype, std::move(shape), bytes.data());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ContainerError("corrupt header in " + path.string() + ": " + e.what());
  }
  return c;
}

Container read_container(const std::filesystem::path& path, const std::string& expected) {
  Container c = read_container(path);
  if (c.fingerprint != expected) {
    throw FingerprintMismatch("fingerprint mismatch in " + path.string() + ": file has " +
                              c.fingerprint + ", configuration expects " + expected);
  }
  return c;
}

template void Container::add<float>(std::string, std::vector<int64_t>, std::span<const float>);
template void Container::add<double>(std::string, std::vector<int64_t>, std::span<const double>);
template void Container::add<int32_t>(std::string, std::vector<int64_t>, std::span<const int32_t>);
template void Container::add<uint8_t>(std::string, std::vector<int64_t>, std::span<const uint8_t>);
template std::vector<float> Container::read<float>(const std::string&, std::vector<int64_t>*) const;
template std::vector<double> Container::read<double>(const std::string&, std::vector<int64_t>*) const;
template std::vector<int32_t> Container::read<int32_t>(const std::string&, std::vector<int64_t>*) const;
template std::vector<uint8_t> Container::read<uint8_t>(const std::string&, std::vector<int64_t>*) const;

}  // namespace timbre::io
