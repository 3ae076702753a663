// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

#include "sde_restore/error.hpp"
#include "sde_restore/fft.hpp"
#include "sde_restore/random.hpp"
#include "sde_restore/signal_io.hpp"

namespace sde_restore {

using cfloat = std::complex<float>;

struct StftConfig {
  int win_len = 510;
  int hop = 128;
  int fft_size = 512;
  double compression_scale = 0.15;  // beta in c = beta * |X|^0.5 * exp(i angle X)

  int bins() const { return fft_size / 2 + 1; }

  void validate() const {
    require(win_len > 0 && hop > 0, ErrorKind::Config, "STFT window and hop must be positive");
    require(hop <= win_len, ErrorKind::Config, "STFT hop must not exceed the window length");
    require(fft_size >= win_len && is_power_of_two(static_cast<std::size_t>(fft_size)), ErrorKind::Config,
            "FFT size must be a power of two at least the window length");
    require(compression_scale > 0, ErrorKind::Config, "compression scale must be positive");
  }
};

/// Symmetric Hann window of length n.
inline std::vector<double> hann_window(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  if (n == 1) {
    w[0] = 1.0;
    return w;
  }
  for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
  return w;
}

/// F x T complex matrix stored frame-major: bin f of frame t is at t*F + f.
struct ComplexSpectrogram {
  int bins = 0;
  int frames = 0;
  std::vector<cfloat> data;
  bool compressed = false;
  double norm_factor = 1.0;

  ComplexSpectrogram() = default;
  ComplexSpectrogram(int f, int t) : bins(f), frames(t), data(static_cast<std::size_t>(f) * t) {}

  std::size_t size() const { return data.size(); }
  cfloat& at(int f, int t) { return data[static_cast<std::size_t>(t) * bins + f]; }
  const cfloat& at(int f, int t) const { return data[static_cast<std::size_t>(t) * bins + f]; }

  bool same_shape(const ComplexSpectrogram& o) const { return bins == o.bins && frames == o.frames; }

  ComplexSpectrogram zeros_like() const {
    ComplexSpectrogram z(bins, frames);
    z.compressed = compressed;
    z.norm_factor = norm_factor;
    return z;
  }
};

inline int stft_frame_count(std::size_t length, const StftConfig& cfg) {
  if (length < static_cast<std::size_t>(cfg.win_len)) return 0;
  return 1 + static_cast<int>((length - cfg.win_len) / cfg.hop);
}

inline ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg = {}) {
  cfg.validate();
  require(w.size() >= static_cast<std::size_t>(cfg.win_len), ErrorKind::Size,
          "signal of " + std::to_string(w.size()) + " samples is shorter than one window");
  const int frames = stft_frame_count(w.size(), cfg);
  const std::vector<double> window = hann_window(cfg.win_len);
  const Fft fft(static_cast<std::size_t>(cfg.fft_size));
  ComplexSpectrogram S(cfg.bins(), frames);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.fft_size));
  for (int t = 0; t < frames; ++t) {
    std::fill(buf.begin(), buf.end(), std::complex<double>{});
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (int n = 0; n < cfg.win_len; ++n) buf[n] = window[n] * w.samples[start + n];
    fft.forward(buf);
    for (int f = 0; f < S.bins; ++f) S.at(f, t) = cfloat(buf[f]);
  }
  return S;
}

/// Least-squares weighted overlap-add inverse; samples with no window
/// support are zero.
inline Waveform istft(const ComplexSpectrogram& S, const StftConfig& cfg, std::size_t length, int sample_rate_hz = 16000) {
  cfg.validate();
  require(!S.compressed, ErrorKind::State, "istft requires an uncompressed spectrogram");
  require(S.bins == cfg.bins(), ErrorKind::Shape, "spectrogram bin count does not match the STFT config");
  const std::vector<double> window = hann_window(cfg.win_len);
  const Fft fft(static_cast<std::size_t>(cfg.fft_size));
  const std::size_t span = S.frames > 0 ? static_cast<std::size_t>(S.frames - 1) * cfg.hop + cfg.win_len : 0;
  std::vector<double> acc(std::max(span, length)), norm(std::max(span, length));
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.fft_size));
  const int n = cfg.fft_size;
  for (int t = 0; t < S.frames; ++t) {
    for (int f = 0; f < S.bins; ++f) buf[f] = std::complex<double>(S.at(f, t));
    // Hermitian extension; imaginary parts of DC and Nyquist are discarded.
    buf[0] = buf[0].real();
    buf[n / 2] = buf[n / 2].real();
    for (int f = 1; f < n / 2; ++f) buf[n - f] = std::conj(buf[f]);
    fft.inverse(buf);
    const std::size_t start = static_cast<std::size_t>(t) * cfg.hop;
    for (int k = 0; k < cfg.win_len; ++k) {
      acc[start + k] += window[k] * buf[k].real() / n;
      norm[start + k] += window[k] * window[k];
    }
  }
  Waveform out;
  out.sample_rate_hz = sample_rate_hz;
  out.samples.assign(length, 0.0f);
  for (std::size_t i = 0; i < std::min(length, span); ++i)
    if (norm[i] > 1e-10) out.samples[i] = static_cast<float>(acc[i] / norm[i]);
  return out;
}

inline ComplexSpectrogram compress(const ComplexSpectrogram& S, double scale = 0.15) {
  require(!S.compressed, ErrorKind::State, "spectrogram is already compressed");
  ComplexSpectrogram c = S;
  for (cfloat& v : c.data) {
    const double mag = std::abs(std::complex<double>(v));
    v = mag > 0 ? cfloat(std::complex<double>(v) * (scale / std::sqrt(mag))) : cfloat{};
  }
  c.compressed = true;
  return c;
}

inline ComplexSpectrogram decompress(const ComplexSpectrogram& S, double scale = 0.15) {
  require(S.compressed, ErrorKind::State, "spectrogram is not compressed");
  ComplexSpectrogram x = S;
  for (cfloat& v : x.data) {
    const double mag = std::abs(std::complex<double>(v));
    // (|c|/beta)^2 * c/|c| = c * |c| / beta^2
    v = mag > 0 ? cfloat(std::complex<double>(v) * (mag / (scale * scale))) : cfloat{};
  }
  x.compressed = false;
  return x;
}

struct NormalizedPair {
  Waveform clean;
  Waveform corrupted;
  double norm_factor = 1.0;
};

inline double peak_abs(const Waveform& w) {
  double m = 0.0;
  for (float v : w.samples) m = std::max(m, static_cast<double>(std::abs(v)));
  return m;
}

inline Waveform scale_waveform(const Waveform& w, double gain) {
  Waveform out = w;
  for (float& v : out.samples) v = static_cast<float>(v * gain);
  return out;
}

/// Divides both signals by the corrupted signal's peak magnitude.
inline NormalizedPair normalize_pair(const Waveform& clean, const Waveform& corrupted) {
  const double factor = peak_abs(corrupted);
  require(factor > 0, ErrorKind::Degenerate, "corrupted signal is silent");
  return {scale_waveform(clean, 1.0 / factor), scale_waveform(corrupted, 1.0 / factor), factor};
}

struct Patch {
  ComplexSpectrogram spec;
  int offset = 0;
};

/// Crops `frames` frames starting at `offset`, zero-padding on the right.
inline ComplexSpectrogram crop_frames(const ComplexSpectrogram& S, int offset, int frames) {
  ComplexSpectrogram out(S.bins, frames);
  out.compressed = S.compressed;
  out.norm_factor = S.norm_factor;
  const int avail = std::clamp(S.frames - offset, 0, frames);
  std::copy_n(S.data.begin() + static_cast<std::ptrdiff_t>(offset) * S.bins, static_cast<std::size_t>(avail) * S.bins,
              out.data.begin());
  return out;
}

/// Random contiguous crop; the offset is returned so a paired spectrogram
/// can be cropped identically with crop_frames.
inline Patch extract_patch(const ComplexSpectrogram& S, int frames, Rng& rng) {
  require(frames > 0, ErrorKind::Parameter, "patch length must be positive");
  int offset = 0;
  if (S.frames > frames) offset = static_cast<int>(rng.uniform_index(static_cast<uint64_t>(S.frames - frames + 1)));
  return {crop_frames(S, offset, frames), offset};
}

}  // namespace sde_restore
