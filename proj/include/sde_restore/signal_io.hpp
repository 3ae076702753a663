// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "sde_restore/error.hpp"

namespace sde_restore {

struct Waveform {
  std::vector<float> samples;
  int sample_rate_hz = 16000;

  std::size_t size() const { return samples.size(); }

  void validate() const {
    require(sample_rate_hz > 0, ErrorKind::Parameter, "sample rate must be positive");
    for (float v : samples) require(std::isfinite(v), ErrorKind::NonFinite, "waveform sample is not finite");
  }
};

enum class WavEncoding { Pcm16, Float32 };

struct WavReadInfo {
  uint16_t channels = 1;
  WavEncoding encoding = WavEncoding::Float32;
  bool first_channel_only = false;  // set when a multichannel file was reduced
};

struct WavWriteReport {
  std::size_t clipped = 0;  // samples saturated by PCM16 quantization
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

inline uint32_t read_u32(const unsigned char* p) {
  uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}
inline uint16_t read_u16(const unsigned char* p) {
  uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

}  // namespace detail

inline Waveform read_wav(const std::filesystem::path& path, WavReadInfo* info = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string name = path.string();
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    fail(ErrorKind::Format, name + " is not a RIFF/WAVE file");

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const uint32_t len = detail::read_u32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + len > bytes.size()) {
      // Tolerate a truncated trailing data chunk, reject anything else.
      if (std::memcmp(chunk, "data", 4) != 0) fail(ErrorKind::Format, name + ": chunk overruns file");
    }
    const std::size_t avail = std::min<std::size_t>(len, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) fail(ErrorKind::Format, name + ": fmt chunk too short");
      format = detail::read_u16(chunk + 8);
      channels = detail::read_u16(chunk + 10);
      rate = detail::read_u32(chunk + 12);
      bits = detail::read_u16(chunk + 22);
      if (format == 0xFFFE) {
        if (avail < 26) fail(ErrorKind::Format, name + ": extensible fmt chunk too short");
        format = detail::read_u16(chunk + 32);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_len = avail;
    }
    pos = body + len + (len & 1u);
  }
  if (!have_fmt || data == nullptr) fail(ErrorKind::Format, name + ": missing fmt or data chunk");
  if (channels == 0 || rate == 0) fail(ErrorKind::Format, name + ": zero channels or sample rate");

  WavEncoding encoding;
  if (format == 1 && bits == 16)
    encoding = WavEncoding::Pcm16;
  else if (format == 3 && bits == 32)
    encoding = WavEncoding::Float32;
  else
    fail(ErrorKind::Unsupported, name + ": only PCM16 and IEEE float32 are supported (format " +
                                     std::to_string(format) + ", " + std::to_string(bits) + " bits)");

  const std::size_t frame_bytes = static_cast<std::size_t>(channels) * (bits / 8);
  const std::size_t frames = data_len / frame_bytes;
  Waveform w;
  w.sample_rate_hz = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* p = data + i * frame_bytes;
    if (encoding == WavEncoding::Pcm16) {
      int16_t v;
      std::memcpy(&v, p, 2);
      w.samples[i] = static_cast<float>(v) / 32768.0f;
    } else {
      float v;
      std::memcpy(&v, p, 4);
      w.samples[i] = v;
    }
  }
  if (info) {
    info->channels = channels;
    info->encoding = encoding;
    info->first_channel_only = channels > 1;
  }
  return w;
}

/// Writes a mono file. PCM16 saturates to [-1, 1 - 2^-15] and reports the
/// number of clipped samples.
inline WavWriteReport write_wav(const std::filesystem::path& path, const Waveform& w,
                                WavEncoding encoding = WavEncoding::Float32) {
  w.validate();
  WavWriteReport report;
  const uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
  const uint16_t block = bits / 8;
  const uint32_t data_len = static_cast<uint32_t>(w.samples.size() * block);

  std::string out;
  out.reserve(44 + data_len);
  out.append("RIFF");
  detail::put<uint32_t>(out, 36 + data_len);
  out.append("WAVEfmt ");
  detail::put<uint32_t>(out, 16);
  detail::put<uint16_t>(out, encoding == WavEncoding::Pcm16 ? 1 : 3);
  detail::put<uint16_t>(out, 1);
  detail::put<uint32_t>(out, static_cast<uint32_t>(w.sample_rate_hz));
  detail::put<uint32_t>(out, static_cast<uint32_t>(w.sample_rate_hz) * block);
  detail::put<uint16_t>(out, block);
  detail::put<uint16_t>(out, bits);
  out.append("data");
  detail::put<uint32_t>(out, data_len);
  for (float v : w.samples) {
    if (encoding == WavEncoding::Pcm16) {
      double q = std::nearbyint(static_cast<double>(v) * 32768.0);
      if (q > 32767.0 || q < -32768.0) {
        ++report.clipped;
        q = std::clamp(q, -32768.0, 32767.0);
      }
      detail::put<int16_t>(out, static_cast<int16_t>(q));
    } else {
      detail::put<float>(out, v);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorKind::Io, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) fail(ErrorKind::Io, "write failed for " + path.string());
  return report;
}

struct ResampleOptions {
  int taps_per_phase = 24;
  double kaiser_beta = 8.6;
  int max_factor = 64;  // largest admissible L or M after reduction
};

/// Kaiser-windowed sinc lowpass of odd length, cutoff in cycles/sample.
inline std::vector<double> kaiser_sinc(std::size_t length, double cutoff, double beta) {
  std::vector<double> h(length);
  const double center = 0.5 * static_cast<double>(length - 1);
  const double denom = std::cyl_bessel_i(0.0, beta);
  for (std::size_t n = 0; n < length; ++n) {
    const double m = static_cast<double>(n) - center;
    const double x = 2.0 * cutoff * m;
    const double sinc = m == 0.0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double r = center > 0 ? m / center : 0.0;
    const double win = std::cyl_bessel_i(0.0, beta * std::sqrt(std::max(0.0, 1.0 - r * r))) / denom;
    h[n] = 2.0 * cutoff * sinc * win;
  }
  return h;
}

/// Rational-rate polyphase resampling (upsample by L, lowpass, downsample by
/// M) with the filter's linear-phase delay removed.
inline Waveform resample_polyphase(const Waveform& w, int target_rate_hz, const ResampleOptions& opt = {}) {
  require(w.sample_rate_hz > 0 && target_rate_hz > 0, ErrorKind::Parameter, "sample rates must be positive");
  if (target_rate_hz == w.sample_rate_hz) return w;
  const int g = std::gcd(w.sample_rate_hz, target_rate_hz);
  const int up = target_rate_hz / g;
  const int down = w.sample_rate_hz / g;
  if (up > opt.max_factor || down > opt.max_factor)
    fail(ErrorKind::Unsupported, "resampling ratio " + std::to_string(up) + "/" + std::to_string(down) +
                                     " exceeds the supported factor " + std::to_string(opt.max_factor));

  const int factor = std::max(up, down);
  const std::size_t half = static_cast<std::size_t>(opt.taps_per_phase) * factor / 2;
  const std::size_t length = 2 * half + 1;
  std::vector<double> h = kaiser_sinc(length, 0.5 / factor, opt.kaiser_beta);
  for (double& v : h) v *= up;

  const std::size_t n_in = w.samples.size();
  const std::size_t n_out = (n_in * up + down - 1) / down;
  Waveform out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(n_out);
  const long long L = up;
  for (std::size_t k = 0; k < n_out; ++k) {
    // Output k sits at upsampled index k*M; the filter delay is `half`.
    const long long center = static_cast<long long>(k) * down + static_cast<long long>(half);
    // Taps j with (center - j) divisible by L hit nonzero upsampled samples.
    long long j = center % L;
    double acc = 0.0;
    for (; j < static_cast<long long>(length); j += L) {
      const long long idx = (center - j) / L;
      if (idx < 0) break;
      if (idx < static_cast<long long>(n_in)) acc += h[static_cast<std::size_t>(j)] * w.samples[static_cast<std::size_t>(idx)];
    }
    out.samples[k] = static_cast<float>(acc);
  }
  return out;
}

}  // namespace sde_restore
