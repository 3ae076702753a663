// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "sde_restore/error.hpp"

namespace sde_restore {

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

inline std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// Iterative radix-2 complex FFT with precomputed twiddles and bit reversal.
class Fft {
 public:
  explicit Fft(std::size_t n) : n_(n), bitrev_(n), twiddle_(n / 2) {
    require(is_power_of_two(n), ErrorKind::Parameter, "FFT size must be a power of two");
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) ++bits;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (std::size_t b = 0; b < bits; ++b)
        if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
      bitrev_[i] = r;
    }
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[k] = {std::cos(a), std::sin(a)};
    }
  }

  std::size_t size() const { return n_; }

  void forward(std::span<std::complex<double>> data) const { transform(data, false); }

  /// Unnormalized inverse (caller divides by size()).
  void inverse(std::span<std::complex<double>> data) const { transform(data, true); }

 private:
  void transform(std::span<std::complex<double>> data, bool inverse) const {
    require(data.size() == n_, ErrorKind::Shape, "FFT buffer size mismatch");
    for (std::size_t i = 0; i < n_; ++i)
      if (i < bitrev_[i]) std::swap(data[i], data[bitrev_[i]]);
    for (std::size_t len = 2; len <= n_; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t stride = n_ / len;
      for (std::size_t start = 0; start < n_; start += len) {
        for (std::size_t k = 0; k < half; ++k) {
          std::complex<double> w = twiddle_[k * stride];
          if (inverse) w = std::conj(w);
          const std::complex<double> a = data[start + k];
          const std::complex<double> b = data[start + k + half] * w;
          data[start + k] = a + b;
          data[start + k + half] = a - b;
        }
      }
    }
  }

  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  std::vector<std::complex<double>> twiddle_;
};

/// Full linear convolution via zero-padded FFT.
inline std::vector<double> fft_convolve(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) return {};
  const std::size_t out_len = a.size() + b.size() - 1;
  const std::size_t n = next_power_of_two(out_len);
  Fft fft(n);
  std::vector<std::complex<double>> fa(n), fb(n);
  for (std::size_t i = 0; i < a.size(); ++i) fa[i] = a[i];
  for (std::size_t i = 0; i < b.size(); ++i) fb[i] = b[i];
  fft.forward(fa);
  fft.forward(fb);
  for (std::size_t i = 0; i < n; ++i) fa[i] *= fb[i];
  fft.inverse(fa);
  std::vector<double> out(out_len);
  const double scale = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < out_len; ++i) out[i] = fa[i].real() * scale;
  return out;
}

}  // namespace sde_restore
