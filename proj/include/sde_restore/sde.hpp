// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <cmath>
#include <complex>
#include <fstream>
#include <string>
#include <vector>

#include "sde_restore/error.hpp"
#include "sde_restore/random.hpp"
#include "sde_restore/spectral.hpp"

namespace sde_restore {

/// Ornstein-Uhlenbeck process with exponentially growing noise, pulled
/// towards the conditioner y.
struct SdeConfig {
  double gamma = 1.5;
  double sigma_min = 0.05;
  double sigma_max = 0.5;
  double t_max = 1.0;
  double t_eps = 0.03;

  void validate() const {
    require(sigma_min > 0 && sigma_min < sigma_max, ErrorKind::Config, "need 0 < sigma_min < sigma_max");
    require(gamma > 0, ErrorKind::Config, "gamma must be positive");
    require(t_eps > 0 && t_eps < t_max, ErrorKind::Config, "need 0 < t_eps < t_max");
  }

  double log_ratio() const { return std::log(sigma_max / sigma_min); }
};

/// Diffusion coefficient g(t).
inline double diffusion_g(double t, const SdeConfig& cfg) {
  return cfg.sigma_min * std::pow(cfg.sigma_max / cfg.sigma_min, t) * std::sqrt(2.0 * cfg.log_ratio());
}

/// Weight of x0 in the kernel mean.
inline double mean_weight(double t, const SdeConfig& cfg) { return std::exp(-cfg.gamma * t); }

inline double kernel_variance(double t, const SdeConfig& cfg) {
  const double lr = cfg.log_ratio();
  const double bracket = std::exp(2.0 * t * lr) - std::exp(-2.0 * cfg.gamma * t);
  return std::max(0.0, cfg.sigma_min * cfg.sigma_min * bracket * lr / (cfg.gamma + lr));
}

inline double kernel_std(double t, const SdeConfig& cfg) { return std::sqrt(kernel_variance(t, cfg)); }

namespace detail {
template <class C>
void check_same_size(const std::vector<C>& a, const std::vector<C>& b) {
  require(a.size() == b.size(), ErrorKind::Shape,
          "shape mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " bins");
}
inline void check_same_shape(const ComplexSpectrogram& a, const ComplexSpectrogram& b) {
  require(a.same_shape(b), ErrorKind::Shape,
          "shape mismatch: " + std::to_string(a.bins) + "x" + std::to_string(a.frames) + " vs " +
              std::to_string(b.bins) + "x" + std::to_string(b.frames));
}
template <class C>
C complex_normal_as(Rng& rng) {
  const std::complex<double> z = rng.complex_normal();
  return C(static_cast<typename C::value_type>(z.real()), static_cast<typename C::value_type>(z.imag()));
}
}  // namespace detail

template <class C>
std::vector<C> drift(const std::vector<C>& x, const std::vector<C>& y, const SdeConfig& cfg) {
  detail::check_same_size(x, y);
  std::vector<C> out(x.size());
  const auto g = static_cast<typename C::value_type>(cfg.gamma);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = g * (y[i] - x[i]);
  return out;
}

template <class C>
std::vector<C> kernel_mean(const std::vector<C>& x0, const std::vector<C>& y, double t, const SdeConfig& cfg) {
  detail::check_same_size(x0, y);
  const double w = mean_weight(t, cfg);
  std::vector<C> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const std::complex<double> a(x0[i]), b(y[i]);
    const std::complex<double> m = w * a + (1.0 - w) * b;
    out[i] = C(static_cast<typename C::value_type>(m.real()), static_cast<typename C::value_type>(m.imag()));
  }
  return out;
}

/// Score of the perturbation kernel, -(x_t - mu) / sigma(t)^2.
template <class C>
std::vector<C> kernel_score(const std::vector<C>& xt, const std::vector<C>& x0, const std::vector<C>& y, double t,
                            const SdeConfig& cfg) {
  detail::check_same_size(xt, x0);
  require(t >= cfg.t_eps - 1e-12, ErrorKind::NumericGuard,
          "kernel score requested at t=" + std::to_string(t) + " below t_eps=" + std::to_string(cfg.t_eps));
  const std::vector<C> mu = kernel_mean(x0, y, t, cfg);
  const double inv_var = 1.0 / kernel_variance(t, cfg);
  std::vector<C> out(xt.size());
  for (std::size_t i = 0; i < xt.size(); ++i) {
    const std::complex<double> d = std::complex<double>(xt[i]) - std::complex<double>(mu[i]);
    const std::complex<double> s = -d * inv_var;
    out[i] = C(static_cast<typename C::value_type>(s.real()), static_cast<typename C::value_type>(s.imag()));
  }
  return out;
}

template <class C>
std::vector<C> sample_kernel(const std::vector<C>& x0, const std::vector<C>& y, double t, const SdeConfig& cfg,
                             Rng& rng) {
  std::vector<C> x = kernel_mean(x0, y, t, cfg);
  const auto sd = static_cast<typename C::value_type>(kernel_std(t, cfg));
  for (C& v : x) v += sd * detail::complex_normal_as<C>(rng);
  return x;
}

/// x_T = y + sigma(T) z.
template <class C>
std::vector<C> sample_prior(const std::vector<C>& y, const SdeConfig& cfg, Rng& rng) {
  std::vector<C> x = y;
  const auto sd = static_cast<typename C::value_type>(kernel_std(cfg.t_max, cfg));
  for (C& v : x) v += sd * detail::complex_normal_as<C>(rng);
  return x;
}

inline ComplexSpectrogram sample_prior(const ComplexSpectrogram& y, const SdeConfig& cfg, Rng& rng) {
  ComplexSpectrogram x = y;
  x.data = sample_prior(y.data, cfg, rng);
  return x;
}

inline ComplexSpectrogram kernel_score(const ComplexSpectrogram& xt, const ComplexSpectrogram& x0,
                                       const ComplexSpectrogram& y, double t, const SdeConfig& cfg) {
  detail::check_same_shape(xt, x0);
  detail::check_same_shape(xt, y);
  ComplexSpectrogram s = xt.zeros_like();
  s.data = kernel_score(xt.data, x0.data, y.data, t, cfg);
  return s;
}

using cdouble = std::complex<double>;

/// Forward Euler-Maruyama integration on [0, T]. `visit(k, t_k, x_k)` is
/// called for every state including the initial one. `diffusion_scale`
/// multiplies g (0 gives the deterministic relaxation ODE).
template <class Visit>
void simulate_forward_visit(const std::vector<cdouble>& x0, const std::vector<cdouble>& y, const SdeConfig& cfg,
                            int n_steps, Rng& rng, Visit&& visit, double diffusion_scale = 1.0) {
  detail::check_same_size(x0, y);
  require(n_steps >= 1, ErrorKind::Parameter, "n_steps must be positive");
  const double dt = cfg.t_max / n_steps;
  const double sq = std::sqrt(dt);
  std::vector<cdouble> x = x0;
  visit(0, 0.0, static_cast<const std::vector<cdouble>&>(x));
  for (int k = 0; k < n_steps; ++k) {
    const double t = k * dt;
    const double gs = diffusion_scale * diffusion_g(t, cfg) * sq;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const cdouble f = cfg.gamma * (y[i] - x[i]);
      x[i] += f * dt;
      if (gs != 0.0) x[i] += gs * rng.complex_normal();
    }
    visit(k + 1, (k + 1) * dt, static_cast<const std::vector<cdouble>&>(x));
  }
}

struct Trajectory {
  std::vector<double> t;
  std::vector<std::vector<cdouble>> x;
};

inline Trajectory simulate_forward(const std::vector<cdouble>& x0, const std::vector<cdouble>& y, const SdeConfig& cfg,
                                   int n_steps, Rng& rng, double diffusion_scale = 1.0) {
  require(n_steps >= 100, ErrorKind::Parameter, "simulate_forward needs at least 100 steps");
  Trajectory tr;
  tr.t.reserve(static_cast<std::size_t>(n_steps) + 1);
  tr.x.reserve(static_cast<std::size_t>(n_steps) + 1);
  simulate_forward_visit(
      x0, y, cfg, n_steps, rng,
      [&](int, double t, const std::vector<cdouble>& x) {
        tr.t.push_back(t);
        tr.x.push_back(x);
      },
      diffusion_scale);
  return tr;
}

/// One row per state: t, then Re/Im of each tracked bin.
inline void write_trajectory_csv(const std::string& path, const Trajectory& tr, const std::vector<std::size_t>& bins) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
  out << "t";
  for (std::size_t b : bins) out << ",re_" << b << ",im_" << b;
  out << "\n";
  out.precision(10);
  for (std::size_t k = 0; k < tr.t.size(); ++k) {
    out << tr.t[k];
    for (std::size_t b : bins) out << "," << tr.x[k].at(b).real() << "," << tr.x[k].at(b).imag();
    out << "\n";
  }
}

}  // namespace sde_restore
