#include "timbre/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace timbre::dsp {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

uint32_t read_u32(const char* p) {
  uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}
uint16_t read_u16(const char* p) {
  uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WavError(WavError::Kind::kMissingFile, "cannot open WAV file: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw WavError(WavError::Kind::kCorrupt, "not a RIFF/WAVE file: " + path.string());
  }

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  const char* data = nullptr;
  size_t data_size = 0;
  size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = bytes.data() + pos;
    const size_t size = read_u32(id + 4);
    const size_t body = pos + 8;
    if (body + size > bytes.size()) {
      // Tolerate a truncated final data chunk.
      if (std::memcmp(id, "data", 4) != 0) break;
    }
    if (std::memcmp(id, "fmt ", 4) == 0 && size >= 16) {
      format = read_u16(id + 8);
      channels = read_u16(id + 10);
      rate = read_u32(id + 12);
      bits = read_u16(id + 22);
      if (format == kFormatExtensible && size >= 26) format = read_u16(id + 32);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min(size, bytes.size() - body);
    }
    pos = body + size + (size & 1);
  }
  if (channels == 0 || data == nullptr) {
    throw WavError(WavError::Kind::kCorrupt, "missing fmt or data chunk: " + path.string());
  }
  if (channels != 1) {
    throw WavError(WavError::Kind::kChannelsUnsupported,
                   "channels unsupported: " + std::to_string(channels) + " (mono only)");
  }

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  if (format == kFormatPcm && bits == 16) {
    clip.samples.resize(data_size / 2);
    for (size_t i = 0; i < clip.samples.size(); ++i) {
      int16_t v;
      std::memcpy(&v, data + 2 * i, 2);
      clip.samples[i] = static_cast<float>(v) / 32768.0f;
    }
  } else if (format == kFormatPcm && bits == 32) {
    clip.samples.resize(data_size / 4);
    for (size_t i = 0; i < clip.samples.size(); ++i) {
      int32_t v;
      std::memcpy(&v, data + 4 * i, 4);
      clip.samples[i] = static_cast<float>(static_cast<double>(v) / 2147483648.0);
    }
  } else if (format == kFormatFloat && bits == 32) {
    clip.samples.resize(data_size / 4);
    std::memcpy(clip.samples.data(), data, clip.samples.size() * 4);
    for (float v : clip.samples) {
      if (!std::isfinite(v)) throw WavError(WavError::Kind::kCorrupt, "non-finite sample");
    }
  } else {
    throw WavError(WavError::Kind::kUnsupportedEncoding,
                   "unsupported encoding: format " + std::to_string(format) + ", " +
                       std::to_string(bits) + " bits");
  }
  return clip;
}

void save_wav(const AudioClip& clip, const std::filesystem::path& path, WavEncoding encoding) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WavError(WavError::Kind::kMissingFile, "cannot write WAV file: " + path.string());
  const uint16_t bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const uint16_t format = encoding == WavEncoding::kPcm16 ? kFormatPcm : kFormatFloat;
  const uint32_t data_bytes = static_cast<uint32_t>(clip.samples.size() * (bits / 8));
  out.write("RIFF", 4);
  put<uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put<uint32_t>(out, 16);
  put<uint16_t>(out, format);
  put<uint16_t>(out, 1);
  put<uint32_t>(out, static_cast<uint32_t>(clip.sample_rate));
  put<uint32_t>(out, static_cast<uint32_t>(clip.sample_rate) * (bits / 8));
  put<uint16_t>(out, bits / 8);
  put<uint16_t>(out, bits);
  out.write("data", 4);
  put<uint32_t>(out, data_bytes);
  for (float v : clip.samples) {
    if (encoding == WavEncoding::kPcm16) {
      const double s = std::clamp(std::round(double(v) * 32768.0), -32768.0, 32767.0);
      put<int16_t>(out, static_cast<int16_t>(s));
    } else {
      put<float>(out, v);
    }
  }
}

}  // namespace timbre::dsp
