// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <cmath>
#include <complex>
#include <fstream>
#include <string>
#include <vector>

#include "sde_restore/error.hpp"
#include "sde_restore/random.hpp"
#include "sde_restore/score_net.hpp"
#include "sde_restore/sde.hpp"
#include "sde_restore/spectral.hpp"

namespace sde_restore {

enum class SamplerScheme { EulerMaruyama, PredictorCorrector };

inline const char* to_string(SamplerScheme s) { return s == SamplerScheme::EulerMaruyama ? "em" : "pc"; }

inline SamplerScheme sampler_scheme_from_string(const std::string& s) {
  if (s == "em") return SamplerScheme::EulerMaruyama;
  if (s == "pc") return SamplerScheme::PredictorCorrector;
  fail(ErrorKind::Parameter, "unknown sampler scheme '" + s + "' (expected em or pc)");
}

struct SamplerConfig {
  int n_steps = 50;
  int corrector_steps = 1;
  double snr_r = 0.5;
  SamplerScheme scheme = SamplerScheme::PredictorCorrector;

  void validate() const {
    require(n_steps >= 1, ErrorKind::Config, "n_steps must be at least 1");
    require(corrector_steps >= 0, ErrorKind::Config, "corrector_steps must be non-negative");
    require(snr_r > 0, ErrorKind::Config, "snr_r must be positive");
  }
};

struct DiffusionState {
  ComplexSpectrogram x;
  ComplexSpectrogram y;
  double t = 0.0;
};

namespace sampler_detail {
inline double norm2(const ComplexSpectrogram& s) {
  double acc = 0.0;
  for (const cfloat& v : s.data) acc += std::norm(std::complex<double>(v));
  return std::sqrt(acc);
}

inline void check_finite(const ComplexSpectrogram& x, const char* where, double t) {
  for (const cfloat& v : x.data)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      fail(ErrorKind::NonFinite, std::string("non-finite state after ") + where + " at t=" + std::to_string(t));
}

inline ComplexSpectrogram checked_score(const ScoreFn& score, const DiffusionState& st) {
  ComplexSpectrogram s = score(st.x, st.y, st.t);
  require(s.same_shape(st.x), ErrorKind::Shape, "score output shape differs from the state");
  return s;
}
}  // namespace sampler_detail

/// Reverse-time Euler-Maruyama step from t to t - dt. A null `rng` drops the
/// noise term. `score_norm`, if given, receives ||s||.
inline DiffusionState predictor_step(const DiffusionState& state, const ScoreFn& score, double dt, const SdeConfig& cfg,
                                     Rng* rng, double* score_norm = nullptr) {
  require(state.t - dt >= cfg.t_eps - 1e-12, ErrorKind::NumericGuard,
          "predictor step would go below t_eps (t=" + std::to_string(state.t) + ", dt=" + std::to_string(dt) + ")");
  DiffusionState out = state;
  out.t = state.t - dt;
  if (dt == 0.0) return out;
  const ComplexSpectrogram s = sampler_detail::checked_score(score, state);
  if (score_norm) *score_norm = sampler_detail::norm2(s);
  const double g = diffusion_g(state.t, cfg);
  const double g2 = g * g;
  const double noise = g * std::sqrt(dt);
  for (std::size_t i = 0; i < out.x.data.size(); ++i) {
    const std::complex<double> x(state.x.data[i]), y(state.y.data[i]), sc(s.data[i]);
    const std::complex<double> f = cfg.gamma * (y - x);
    std::complex<double> nx = x + (f - g2 * sc) * (-dt);
    if (rng) nx += noise * rng->complex_normal();
    out.x.data[i] = cfloat(static_cast<float>(nx.real()), static_cast<float>(nx.imag()));
  }
  sampler_detail::check_finite(out.x, "predictor", out.t);
  return out;
}

/// Langevin step size 2 (r ||z|| / ||s||)^2.
inline double langevin_step_size(double z_norm, double s_norm, double snr_r) {
  const double q = snr_r * z_norm / s_norm;
  return 2.0 * q * q;
}

/// One annealed Langevin correction at fixed t; skipped when the score is zero.
inline DiffusionState corrector_step(const DiffusionState& state, const ScoreFn& score, const SdeConfig& /*cfg*/,
                                     const SamplerConfig& scfg, Rng& rng) {
  const ComplexSpectrogram s = sampler_detail::checked_score(score, state);
  std::vector<std::complex<double>> z(s.data.size());
  double z2 = 0.0;
  for (auto& v : z) {
    v = rng.complex_normal();
    z2 += std::norm(v);
  }
  const double s_norm = sampler_detail::norm2(s);
  if (s_norm == 0.0) return state;
  const double eps = langevin_step_size(std::sqrt(z2), s_norm, scfg.snr_r);
  const double amp = std::sqrt(2.0 * eps);
  DiffusionState out = state;
  for (std::size_t i = 0; i < out.x.data.size(); ++i) {
    const std::complex<double> nx = std::complex<double>(state.x.data[i]) + eps * std::complex<double>(s.data[i]) + amp * z[i];
    out.x.data[i] = cfloat(static_cast<float>(nx.real()), static_cast<float>(nx.imag()));
  }
  sampler_detail::check_finite(out.x, "corrector", out.t);
  return out;
}

struct TraceRow {
  int step = 0;
  double t = 0.0;
  double sigma = 0.0;
  double x_norm = 0.0;
  double score_norm = 0.0;
};

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path);
  out << "step,t,sigma,x_norm,score_norm\n";
  out.precision(10);
  for (const auto& r : rows) out << r.step << "," << r.t << "," << r.sigma << "," << r.x_norm << "," << r.score_norm << "\n";
}

/// Time of grid point k: T - k (T - t_eps) / N.
inline double grid_time(int k, const SdeConfig& cfg, int n_steps) {
  return cfg.t_max - k * (cfg.t_max - cfg.t_eps) / n_steps;
}

/// Reverse diffusion from x_T ~ N_C(y, sigma(T)^2) down to t_eps on a uniform
/// grid of N predictor steps, each preceded by the corrector steps (pc).
inline ComplexSpectrogram sample(const ComplexSpectrogram& y, const ScoreFn& score, const SdeConfig& cfg,
                                 const SamplerConfig& scfg, Rng& rng, std::vector<TraceRow>* trace = nullptr) {
  cfg.validate();
  scfg.validate();
  DiffusionState st{sample_prior(y, cfg, rng), y, cfg.t_max};
  const double dt = (cfg.t_max - cfg.t_eps) / scfg.n_steps;
  for (int k = 0; k < scfg.n_steps; ++k) {
    st.t = grid_time(k, cfg, scfg.n_steps);
    if (scfg.scheme == SamplerScheme::PredictorCorrector)
      for (int c = 0; c < scfg.corrector_steps; ++c) st = corrector_step(st, score, cfg, scfg, rng);
    double s_norm = 0.0;
    const double t_now = st.t;
    // the last step lands exactly on t_eps regardless of rounding in dt
    const double step = k + 1 == scfg.n_steps ? t_now - cfg.t_eps : dt;
    st = predictor_step(st, score, step, cfg, &rng, &s_norm);
    if (trace) trace->push_back({k, t_now, kernel_std(t_now, cfg), sampler_detail::norm2(st.x), s_norm});
  }
  return st.x;
}

}  // namespace sde_restore
