#pragma once

// RIFF/WAVE reading and writing (PCM 16-bit and IEEE float 32-bit,
// little-endian) plus the plain-text change-point sidecar.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "segbeam/core.hpp"

namespace segbeam {

struct AudioBuffer {
  RealMatrix samples;  // channels x length
  double sample_rate = 16000.0;

  Index channels() const { return samples.rows(); }
  Index length() const { return samples.cols(); }
};

enum class WavFormat { Pcm16, Float32 };

namespace detail {

inline std::uint32_t le_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
inline std::uint16_t le_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace detail

inline AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("read_wav: cannot open '" + path + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto fail = [&](const std::string& what) { return DataError("read_wav: " + path + ": " + what); };

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = detail::le_u32(hdr + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) throw fail("truncated fmt chunk");
      const unsigned char* f = bytes.data() + body;
      format = detail::le_u16(f);
      channels = detail::le_u16(f + 2);
      rate = detail::le_u32(f + 4);
      bits = detail::le_u16(f + 14);
      if (format == 0xFFFE) {  // WAVE_FORMAT_EXTENSIBLE: subformat GUID starts with the real tag
        if (size < 40) throw fail("truncated extensible fmt chunk");
        format = detail::le_u16(f + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (body + size > bytes.size()) throw fail("truncated data chunk");
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw fail("missing fmt chunk");
  if (data == nullptr) throw fail("missing data chunk");
  if (channels == 0) throw fail("zero channels");

  const bool pcm16 = format == 1 && bits == 16;
  const bool float32 = format == 3 && bits == 32;
  if (!pcm16 && !float32)
    throw fail("unsupported encoding (format " + std::to_string(format) + ", " + std::to_string(bits) +
               " bits); only PCM 16-bit and float 32-bit are supported");

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  if (data_size % frame_bytes != 0) throw fail("data chunk is not a whole number of frames");
  const Index length = static_cast<Index>(data_size / frame_bytes);

  AudioBuffer buf;
  buf.sample_rate = rate;
  buf.samples.resize(channels, length);
  for (Index t = 0; t < length; ++t) {
    for (Index c = 0; c < channels; ++c) {
      const unsigned char* s = data + static_cast<std::size_t>(t) * frame_bytes + static_cast<std::size_t>(c) * (bits / 8);
      if (pcm16) {
        buf.samples(c, t) = static_cast<std::int16_t>(detail::le_u16(s)) / 32768.0;
      } else {
        buf.samples(c, t) = static_cast<double>(std::bit_cast<float>(detail::le_u32(s)));
      }
    }
  }
  return buf;
}

inline void write_wav(const AudioBuffer& buf, const std::string& path, WavFormat format = WavFormat::Float32) {
  if (buf.channels() < 1 || buf.length() < 1) throw ParameterError("write_wav: empty buffer for '" + path + "'");
  if (!(buf.sample_rate > 0.0)) throw ParameterError("write_wav: invalid sample rate");
  if (!detail::all_finite(buf.samples)) throw DataError("write_wav: non-finite sample for '" + path + "'");

  const bool is_float = format == WavFormat::Float32;
  const std::uint16_t bits = is_float ? 32 : 16;
  const auto channels = static_cast<std::uint16_t>(buf.channels());
  const auto rate = static_cast<std::uint32_t>(std::lround(buf.sample_rate));
  const std::uint32_t block = channels * (bits / 8u);
  const std::uint64_t data_size = static_cast<std::uint64_t>(buf.length()) * block;
  if (data_size > 0xFFFF0000ull) throw ParameterError("write_wav: buffer too large for RIFF");

  std::string out;
  out.reserve(static_cast<std::size_t>(data_size) + 64);
  out += "RIFF";
  const std::uint32_t fmt_size = is_float ? 18 : 16;
  const std::uint32_t fact_size = is_float ? 12 : 0;
  detail::put_u32(out, static_cast<std::uint32_t>(4 + (8 + fmt_size) + fact_size + 8 + data_size));
  out += "WAVE";
  out += "fmt ";
  detail::put_u32(out, fmt_size);
  detail::put_u16(out, is_float ? 3 : 1);
  detail::put_u16(out, channels);
  detail::put_u32(out, rate);
  detail::put_u32(out, rate * block);
  detail::put_u16(out, static_cast<std::uint16_t>(block));
  detail::put_u16(out, bits);
  if (is_float) {
    detail::put_u16(out, 0);  // cbSize
    out += "fact";
    detail::put_u32(out, 4);
    detail::put_u32(out, static_cast<std::uint32_t>(buf.length()));
  }
  out += "data";
  detail::put_u32(out, static_cast<std::uint32_t>(data_size));
  for (Index t = 0; t < buf.length(); ++t) {
    for (Index c = 0; c < buf.channels(); ++c) {
      const double v = buf.samples(c, t);
      if (is_float) {
        detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        const double q = std::clamp(std::round(v * 32768.0), -32768.0, 32767.0);
        detail::put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("write_wav: cannot open '" + path + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write_wav: write failed for '" + path + "'");
}

// One sample index per line.
inline void write_change_points(const std::vector<Index>& points, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path + "' for writing");
  for (Index p : points) f << p << '\n';
  if (!f) throw IoError("write failed for '" + path + "'");
}

inline std::vector<Index> read_change_points(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open '" + path + "'");
  std::vector<Index> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Index v = 0;
    if (!(ss >> v)) throw DataError("change-point sidecar '" + path + "': bad line '" + line + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace segbeam
