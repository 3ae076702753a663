// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sde_restore/error.hpp"

namespace sde_restore {

using cdouble = std::complex<double>;

enum class FilterFamily { Butterworth, Chebyshev1, Elliptic, Bessel };

inline const char* to_string(FilterFamily f) {
  switch (f) {
    case FilterFamily::Butterworth: return "butterworth";
    case FilterFamily::Chebyshev1: return "chebyshev1";
    case FilterFamily::Elliptic: return "elliptic";
    case FilterFamily::Bessel: return "bessel";
  }
  return "?";
}

inline FilterFamily filter_family_from_string(const std::string& s) {
  if (s == "butterworth") return FilterFamily::Butterworth;
  if (s == "chebyshev1") return FilterFamily::Chebyshev1;
  if (s == "elliptic") return FilterFamily::Elliptic;
  if (s == "bessel") return FilterFamily::Bessel;
  fail(ErrorKind::Parameter, "unknown filter family '" + s + "'");
}

/// Zeros, poles and gain of a transfer function.
struct Zpk {
  std::vector<cdouble> zeros;
  std::vector<cdouble> poles;
  double gain = 1.0;
};

// ---------------------------------------------------------------------------
// Elliptic integrals and Jacobi elliptic functions (parameter m = k^2).

inline double agm(double a, double b) {
  for (int i = 0; i < 64 && std::abs(a - b) > 1e-16 * a; ++i) {
    const double an = 0.5 * (a + b);
    b = std::sqrt(a * b);
    a = an;
  }
  return a;
}

/// Complete elliptic integral K expressed through the complementary
/// parameter m1 = 1 - m, which stays accurate as m approaches 1.
inline double ellipk_m1(double m1) { return std::numbers::pi / (2.0 * agm(1.0, std::sqrt(m1))); }

inline double ellipk(double m) { return ellipk_m1(1.0 - m); }

/// Carlson's symmetric integral R_F(x, y, z).
inline double carlson_rf(double x, double y, double z) {
  for (int i = 0; i < 100; ++i) {
    const double mu = (x + y + z) / 3.0;
    const double dx = 1.0 - x / mu, dy = 1.0 - y / mu, dz = 1.0 - z / mu;
    if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) < 1e-10) {
      const double e2 = dx * dy - dz * dz, e3 = dx * dy * dz;
      return (1.0 - e2 / 10.0 + e3 / 14.0 + e2 * e2 / 24.0 - 3.0 * e2 * e3 / 44.0) / std::sqrt(mu);
    }
    const double sx = std::sqrt(x), sy = std::sqrt(y), sz = std::sqrt(z);
    const double lambda = sx * sy + sy * sz + sz * sx;
    x = 0.25 * (x + lambda);
    y = 0.25 * (y + lambda);
    z = 0.25 * (z + lambda);
  }
  return 1.0 / std::sqrt((x + y + z) / 3.0);
}

/// Incomplete elliptic integral of the first kind F(phi | m), |phi| <= pi/2.
inline double ellipf(double phi, double m) {
  const double s = std::sin(phi), c = std::cos(phi);
  return s * carlson_rf(c * c, 1.0 - m * s * s, 1.0);
}

struct JacobiSnCnDn {
  double sn, cn, dn;
};

/// Jacobi elliptic functions by the descending AGM (Landen) recursion.
inline JacobiSnCnDn ellipj(double u, double m) {
  if (m < 1e-12) {
    const double s = std::sin(u), c = std::cos(u);
    return {s, c, 1.0};
  }
  if (m > 1.0 - 1e-12) {
    const double ch = std::cosh(u);
    return {std::tanh(u), 1.0 / ch, 1.0 / ch};
  }
  double a[16], c[16];
  a[0] = 1.0;
  double b = std::sqrt(1.0 - m);
  c[0] = std::sqrt(m);
  double twon = 1.0;
  int i = 0;
  while (std::abs(c[i] / a[i]) > 1e-16 && i < 15) {
    const double ai = a[i];
    ++i;
    c[i] = 0.5 * (ai - b);
    const double t = std::sqrt(ai * b);
    a[i] = 0.5 * (ai + b);
    b = t;
    twon *= 2.0;
  }
  double phi = twon * a[i] * u;
  double prev = phi;
  do {
    const double t = c[i] * std::sin(phi) / a[i];
    prev = phi;
    phi = 0.5 * (std::asin(t) + phi);
  } while (--i);
  const double cn = std::cos(phi);
  return {std::sin(phi), cn, cn / std::cos(phi - prev)};
}

// ---------------------------------------------------------------------------
// Analog lowpass prototypes, passband edge (or -3 dB point) at 1 rad/s.

inline Zpk butterworth_prototype(int order) {
  Zpk p;
  for (int k = 0; k < order; ++k)
    p.poles.push_back(std::polar(1.0, std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order)));
  p.gain = 1.0;
  return p;
}

inline cdouble product_neg(const std::vector<cdouble>& v) {
  cdouble acc = 1.0;
  for (const cdouble& x : v) acc *= -x;
  return acc;
}

inline Zpk chebyshev1_prototype(int order, double ripple_db) {
  const double eps = std::sqrt(std::pow(10.0, ripple_db / 10.0) - 1.0);
  const double mu = std::asinh(1.0 / eps) / order;
  Zpk p;
  for (int k = 0; k < order; ++k) {
    const double theta = std::numbers::pi * (2.0 * k + 1) / (2.0 * order);
    p.poles.emplace_back(-std::sinh(mu) * std::sin(theta), std::cosh(mu) * std::cos(theta));
  }
  p.gain = product_neg(p.poles).real();
  if (order % 2 == 0) p.gain /= std::sqrt(1.0 + eps * eps);
  return p;
}

/// Elliptic (Cauer) prototype with the given passband ripple and minimum
/// stopband attenuation. The stopband edge is 1/sqrt(m) for the returned m.
inline Zpk elliptic_prototype(int order, double ripple_db, double stop_db, double* modulus_out = nullptr) {
  if (order == 1) return chebyshev1_prototype(1, ripple_db);
  const double eps_sq = std::pow(10.0, ripple_db / 10.0) - 1.0;
  const double eps = std::sqrt(eps_sq);
  const double ck1_sq = eps_sq / (std::pow(10.0, stop_db / 10.0) - 1.0);
  const double k1 = ellipk(ck1_sq);
  const double k1p = ellipk_m1(ck1_sq);
  const double krat = order * k1 / k1p;

  // Solve K(m)/K(1-m) = krat for m on a logistic scale so both m and 1-m
  // stay representable.
  double lo = -60.0, hi = 60.0, m = 0.5, m1 = 0.5;
  for (int it = 0; it < 200; ++it) {
    const double s = 0.5 * (lo + hi);
    m = 1.0 / (1.0 + std::exp(-s));
    m1 = 1.0 / (1.0 + std::exp(s));
    const double r = ellipk(m) / ellipk(m1);
    if (r < krat)
      lo = s;
    else
      hi = s;
  }
  if (modulus_out) *modulus_out = m;
  const double capk = ellipk_m1(m1);

  Zpk p;
  std::vector<JacobiSnCnDn> jac;
  for (int j = 1 - order % 2; j < order; j += 2) jac.push_back(ellipj(j * capk / order, m));
  for (const auto& e : jac) {
    if (std::abs(e.sn) > 1e-12) {
      const cdouble z(0.0, 1.0 / (std::sqrt(m) * e.sn));
      p.zeros.push_back(z);
      p.zeros.push_back(std::conj(z));
    }
  }
  // Inverse of sc(r | 1 - ck1_sq) = 1/eps, i.e. r = F(atan(1/eps) | 1 - ck1_sq).
  const double r = ellipf(std::atan(1.0 / eps), 1.0 - ck1_sq);
  const double v0 = capk * r / (order * k1);
  const JacobiSnCnDn v = ellipj(v0, m1);
  for (const auto& e : jac) {
    const cdouble pole = -(cdouble(e.cn * e.dn * v.sn * v.cn, e.sn * v.dn)) / (1.0 - std::pow(e.dn * v.sn, 2));
    p.poles.push_back(pole);
    if (std::abs(pole.imag()) > 1e-12) p.poles.push_back(std::conj(pole));
  }
  p.gain = (product_neg(p.poles) / product_neg(p.zeros)).real();
  if (order % 2 == 0) p.gain /= std::sqrt(1.0 + eps_sq);
  return p;
}

/// Roots of a monic polynomial given low-to-high coefficients (Durand-Kerner
/// iteration followed by Newton polishing).
inline std::vector<cdouble> polynomial_roots(const std::vector<double>& coeffs_low_to_high) {
  const int n = static_cast<int>(coeffs_low_to_high.size()) - 1;
  const double lead = coeffs_low_to_high.back();
  std::vector<double> a(coeffs_low_to_high);
  for (double& v : a) v /= lead;
  auto eval = [&](cdouble x) {
    cdouble acc = 1.0;
    for (int k = n - 1; k >= 0; --k) acc = acc * x + a[k];
    return acc;
  };
  auto deriv = [&](cdouble x) {
    cdouble acc = static_cast<double>(n);
    for (int k = n - 1; k >= 1; --k) acc = acc * x + a[k] * k;
    return acc;
  };
  const double radius = std::max(1.0, std::pow(std::abs(a[0]), 1.0 / n));
  std::vector<cdouble> r(n);
  for (int k = 0; k < n; ++k) r[k] = radius * std::pow(cdouble(0.4, 0.9), k);
  for (int it = 0; it < 2000; ++it) {
    double delta = 0.0;
    for (int i = 0; i < n; ++i) {
      cdouble denom = 1.0;
      for (int j = 0; j < n; ++j)
        if (j != i) denom *= r[i] - r[j];
      const cdouble step = eval(r[i]) / denom;
      r[i] -= step;
      delta = std::max(delta, std::abs(step));
    }
    if (delta < 1e-14 * radius) break;
  }
  for (cdouble& x : r)
    for (int it = 0; it < 3; ++it) {
      const cdouble d = deriv(x);
      if (std::abs(d) > 0) x -= eval(x) / d;
    }
  return r;
}

/// Bessel prototype normalized so |H(j)| = 1/sqrt(2).
inline Zpk bessel_prototype(int order) {
  // Reverse Bessel polynomial: a_k = (2n-k)! / (2^(n-k) k! (n-k)!).
  std::vector<double> coeffs(order + 1);
  for (int k = 0; k <= order; ++k)
    coeffs[k] = std::exp(std::lgamma(2.0 * order - k + 1) - (order - k) * std::log(2.0) - std::lgamma(k + 1.0) -
                         std::lgamma(order - k + 1.0));
  for (double& c : coeffs) c = std::round(c);
  Zpk p;
  p.poles = polynomial_roots(coeffs);
  for (cdouble& x : p.poles)
    if (std::abs(x.imag()) < 1e-10 * std::abs(x)) x = x.real();
  auto mag2 = [&](double w) {
    cdouble h = 1.0;
    for (const cdouble& x : p.poles) h *= -x / (cdouble(0.0, w) - x);
    return std::norm(h);
  };
  double lo = 0.0, hi = 10.0 * order;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mag2(mid) > 0.5)
      lo = mid;
    else
      hi = mid;
  }
  const double w3 = 0.5 * (lo + hi);
  for (cdouble& x : p.poles) x /= w3;
  p.gain = product_neg(p.poles).real();
  return p;
}

// ---------------------------------------------------------------------------
// Digital filters.

/// One second-order section, a0 normalized to 1.
struct Biquad {
  double b0 = 1, b1 = 0, b2 = 0;
  double a1 = 0, a2 = 0;
};

struct SosFilter {
  std::vector<Biquad> sections;

  /// H(e^{j omega}) with omega in rad/sample.
  cdouble response(double omega) const {
    const cdouble z1 = std::polar(1.0, -omega);
    const cdouble z2 = z1 * z1;
    cdouble h = 1.0;
    for (const Biquad& s : sections) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
    return h;
  }

  double magnitude_db(double freq_hz, double fs) const {
    return 20.0 * std::log10(std::abs(response(2.0 * std::numbers::pi * freq_hz / fs)));
  }

  double max_pole_radius() const {
    double r = 0.0;
    for (const Biquad& s : sections) {
      // z^2 + a1 z + a2
      const cdouble disc = std::sqrt(cdouble(s.a1 * s.a1 - 4.0 * s.a2));
      r = std::max({r, std::abs((-s.a1 + disc) / 2.0), std::abs((-s.a1 - disc) / 2.0)});
    }
    return r;
  }

  /// Direct-form II transposed cascade, zero initial state.
  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> y(x.begin(), x.end());
    for (const Biquad& s : sections) {
      double z1 = 0, z2 = 0;
      for (double& v : y) {
        const double in = v;
        const double out = s.b0 * in + z1;
        z1 = s.b1 * in - s.a1 * out + z2;
        z2 = s.b2 * in - s.a2 * out;
        v = out;
      }
    }
    return y;
  }

  /// Forward-backward (zero-phase) filtering with odd-reflection padding.
  std::vector<double> apply_zero_phase(std::span<const double> x, std::size_t pad = 1024) const {
    const std::size_t n = x.size();
    if (n == 0) return {};
    pad = std::min(pad, n - 1);
    std::vector<double> ext;
    ext.reserve(n + 2 * pad);
    for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
    ext.insert(ext.end(), x.begin(), x.end());
    for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);
    std::vector<double> y = apply(ext);
    std::reverse(y.begin(), y.end());
    y = apply(y);
    std::reverse(y.begin(), y.end());
    return {y.begin() + static_cast<std::ptrdiff_t>(pad), y.begin() + static_cast<std::ptrdiff_t>(pad + n)};
  }
};

/// Bilinear transform of an analog lowpass prototype whose edge sits at
/// 1 rad/s, prewarped so the edge lands exactly on cutoff_hz.
inline Zpk bilinear_lowpass(const Zpk& proto, double cutoff_hz, double fs) {
  const double warped = 2.0 * fs * std::tan(std::numbers::pi * cutoff_hz / fs);
  const double fs2 = 2.0 * fs;
  Zpk d;
  cdouble num = 1.0, den = 1.0;
  for (const cdouble& z : proto.zeros) {
    const cdouble za = z * warped;
    d.zeros.push_back((fs2 + za) / (fs2 - za));
    num *= fs2 - za;
  }
  for (const cdouble& p : proto.poles) {
    const cdouble pa = p * warped;
    d.poles.push_back((fs2 + pa) / (fs2 - pa));
    den *= fs2 - pa;
  }
  const int extra = static_cast<int>(proto.poles.size() - proto.zeros.size());
  for (int i = 0; i < extra; ++i) d.zeros.push_back(-1.0);
  d.gain = proto.gain * std::pow(warped, extra) * (num / den).real();
  return d;
}

namespace detail {

/// Splits roots into conjugate pairs (upper half-plane member first) and
/// lone real roots.
inline void split_roots(std::vector<cdouble> roots, std::vector<cdouble>& complex_upper, std::vector<double>& reals) {
  const double tol = 1e-9;
  for (const cdouble& r : roots) {
    if (std::abs(r.imag()) <= tol * std::max(1.0, std::abs(r)))
      reals.push_back(r.real());
    else if (r.imag() > 0)
      complex_upper.push_back(r);
  }
}

}  // namespace detail

/// Groups conjugate pole pairs with nearby zero pairs into biquads.
inline SosFilter zpk_to_sos(const Zpk& zpk) {
  std::vector<cdouble> pu, zu;
  std::vector<double> pr, zr;
  detail::split_roots(zpk.poles, pu, pr);
  detail::split_roots(zpk.zeros, zu, zr);

  struct Factor {
    double c1, c2;  // 1 + c1 z^-1 + c2 z^-2
    cdouble root;
  };
  auto pair_factors = [](const std::vector<cdouble>& upper, std::vector<double> reals) {
    std::vector<Factor> f;
    for (const cdouble& r : upper) f.push_back({-2.0 * r.real(), std::norm(r), r});
    std::sort(reals.begin(), reals.end());
    for (std::size_t i = 0; i + 1 < reals.size(); i += 2)
      f.push_back({-(reals[i] + reals[i + 1]), reals[i] * reals[i + 1], reals[i]});
    if (reals.size() % 2) f.push_back({-reals.back(), 0.0, reals.back()});
    return f;
  };
  std::vector<Factor> pf = pair_factors(pu, pr);
  std::vector<Factor> zf = pair_factors(zu, zr);
  // Poles farthest from the unit circle first; each takes its nearest zeros.
  std::sort(pf.begin(), pf.end(), [](const Factor& a, const Factor& b) { return std::abs(a.root) < std::abs(b.root); });

  SosFilter sos;
  for (const Factor& p : pf) {
    Biquad s;
    s.a1 = p.c1;
    s.a2 = p.c2;
    if (!zf.empty()) {
      std::size_t best = 0;
      for (std::size_t i = 1; i < zf.size(); ++i)
        if (std::abs(zf[i].root - p.root) < std::abs(zf[best].root - p.root)) best = i;
      s.b1 = zf[best].c1;
      s.b2 = zf[best].c2;
      zf.erase(zf.begin() + static_cast<std::ptrdiff_t>(best));
    }
    sos.sections.push_back(s);
  }
  for (const Factor& z : zf) {  // leftover zeros (none for lowpass designs)
    Biquad s;
    s.b1 = z.c1;
    s.b2 = z.c2;
    sos.sections.push_back(s);
  }
  if (sos.sections.empty()) sos.sections.emplace_back();
  Biquad& first = sos.sections.front();
  first.b0 *= zpk.gain;
  first.b1 *= zpk.gain;
  first.b2 *= zpk.gain;
  return sos;
}

struct LowpassSpec {
  double passband_ripple_db = 1.0;    // Chebyshev-I and elliptic
  double stopband_atten_db = 40.0;    // elliptic
};

inline Zpk analog_prototype(FilterFamily family, int order, const LowpassSpec& spec = {}) {
  switch (family) {
    case FilterFamily::Butterworth: return butterworth_prototype(order);
    case FilterFamily::Chebyshev1: return chebyshev1_prototype(order, spec.passband_ripple_db);
    case FilterFamily::Elliptic: return elliptic_prototype(order, spec.passband_ripple_db, spec.stopband_atten_db);
    case FilterFamily::Bessel: return bessel_prototype(order);
  }
  fail(ErrorKind::Parameter, "unknown filter family");
}

/// Digital IIR lowpass as a cascade of second-order sections.
inline SosFilter design_lowpass(FilterFamily family, int order, double cutoff_hz, double fs, const LowpassSpec& spec = {}) {
  require(order >= 1 && order <= 16, ErrorKind::Parameter, "filter order must be between 1 and 16");
  require(fs > 0 && cutoff_hz > 0 && cutoff_hz < fs / 2, ErrorKind::Parameter,
          "cutoff must lie strictly between 0 and fs/2");
  SosFilter sos = zpk_to_sos(bilinear_lowpass(analog_prototype(family, order, spec), cutoff_hz, fs));
  require(sos.max_pole_radius() < 1.0 - 1e-6, ErrorKind::Parameter, "designed filter is not stable");
  return sos;
}

}  // namespace sde_restore
