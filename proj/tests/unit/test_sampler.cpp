#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sde_restore/sampler.hpp"

using namespace sde_restore;

namespace {

ComplexSpectrogram random_spec(int F, int T, Rng& rng, double sd = 0.5) {
  ComplexSpectrogram s(F, T);
  for (auto& v : s.data) v = cfloat(static_cast<float>(sd * rng.normal()), static_cast<float>(sd * rng.normal()));
  return s;
}

double dist(const ComplexSpectrogram& a, const ComplexSpectrogram& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) acc += std::norm(std::complex<double>(a.data[i]) - std::complex<double>(b.data[i]));
  return std::sqrt(acc);
}

ScoreFn zero_score() {
  return [](const ComplexSpectrogram& x, const ComplexSpectrogram&, double) { return x.zeros_like(); };
}

}  // namespace

TEST_CASE("predictor fixed point and zero step", "[sampler]") {
  const SdeConfig cfg;
  Rng rng(1);
  const ComplexSpectrogram y = random_spec(6, 4, rng);
  DiffusionState st{y, y, 0.5};
  const DiffusionState a = predictor_step(st, zero_score(), 0.02, cfg, nullptr);
  CHECK(a.x.data == y.data);
  CHECK(a.t == Catch::Approx(0.48));

  st.x = random_spec(6, 4, rng);
  const DiffusionState b = predictor_step(st, zero_score(), 0.0, cfg, &rng);
  CHECK(b.x.data == st.x.data);
  CHECK(b.t == 0.5);
  CHECK_THROWS_AS(predictor_step(st, zero_score(), 0.48, cfg, &rng), Error);
}

TEST_CASE("predictor step follows the reverse drift", "[sampler]") {
  // noise-free step: x - dt (gamma (y - x) - g^2 s)
  const SdeConfig cfg;
  ComplexSpectrogram x(1, 1), y(1, 1);
  x.data[0] = {1.0f, 0.0f};
  y.data[0] = {0.0f, 0.0f};
  const ScoreFn unit = [](const ComplexSpectrogram& xx, const ComplexSpectrogram&, double) {
    ComplexSpectrogram s = xx.zeros_like();
    s.data[0] = {1.0f, 0.0f};
    return s;
  };
  const double t = 0.6, dt = 0.01, g = diffusion_g(t, cfg);
  const DiffusionState out = predictor_step({x, y, t}, unit, dt, cfg, nullptr);
  const double expect = 1.0 - dt * (cfg.gamma * (0.0 - 1.0) - g * g * 1.0);
  CHECK(out.x.data[0].real() == Catch::Approx(expect).epsilon(1e-6));
}

TEST_CASE("one predictor step from T moves towards x0", "[sampler]") {
  const SdeConfig cfg;
  Rng rng(2);
  const ComplexSpectrogram x0 = random_spec(8, 4, rng), y = random_spec(8, 4, rng);
  const AnalyticPointMassScore score{x0, cfg};
  const double dt = (cfg.t_max - cfg.t_eps) / 50;
  double before = 0, after = 0;
  for (int p = 0; p < 1000; ++p) {
    DiffusionState st{sample_prior(y, cfg, rng), y, cfg.t_max};
    before += std::pow(dist(st.x, x0), 2);
    after += std::pow(dist(predictor_step(st, score, dt, cfg, &rng).x, x0), 2);
  }
  CHECK(after < before);
}

TEST_CASE("corrector step size algebra", "[sampler]") {
  const SdeConfig cfg;
  const SamplerConfig scfg;
  CHECK(langevin_step_size(2.0, 4.0, 0.5) == Catch::Approx(2 * 0.0625));
  for (double c : {0.5, 3.0}) CHECK(langevin_step_size(1.3, c * 2.1, 0.5) == Catch::Approx(langevin_step_size(1.3, 2.1, 0.5) / (c * c)));

  Rng rng(3);
  const ComplexSpectrogram x = random_spec(5, 5, rng), y = random_spec(5, 5, rng), s = random_spec(5, 5, rng);
  auto scaled = [&](double c) -> ScoreFn {
    return [&, c](const ComplexSpectrogram&, const ComplexSpectrogram&, double) {
      ComplexSpectrogram o = s;
      for (auto& v : o.data) v *= static_cast<float>(c);
      return o;
    };
  };
  // same noise for both: the drift part eps*s shrinks by 1/c and the noise part by 1/c as well
  Rng r1(9), r2(9), r3(9);
  const DiffusionState st{x, y, 0.4};
  const ComplexSpectrogram a = corrector_step(st, scaled(1.0), cfg, scfg, r1).x;
  const ComplexSpectrogram b = corrector_step(st, scaled(4.0), cfg, scfg, r2).x;
  double zn = 0;
  std::vector<std::complex<double>> z(s.data.size());
  for (auto& v : z) v = r3.complex_normal(), zn += std::norm(v);
  const double eps1 = langevin_step_size(std::sqrt(zn), dist(s, s.zeros_like()), scfg.snr_r);
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const std::complex<double> x_i(x.data[i]), s_i(s.data[i]);
    CHECK(std::abs(std::complex<double>(a.data[i]) - (x_i + eps1 * s_i + std::sqrt(2 * eps1) * z[i])) < 1e-5);
    const double eps4 = eps1 / 16;
    CHECK(std::abs(std::complex<double>(b.data[i]) - (x_i + eps4 * 4.0 * s_i + std::sqrt(2 * eps4) * z[i])) < 1e-5);
  }

  Rng r4(10);
  CHECK(corrector_step(st, zero_score(), cfg, scfg, r4).x.data == x.data);
}

TEST_CASE("Langevin corrector keeps the kernel spread", "[sampler]") {
  const SdeConfig cfg;
  const SamplerConfig scfg;
  Rng rng(4);
  const ComplexSpectrogram x0 = random_spec(8, 8, rng), y = random_spec(8, 8, rng);
  const AnalyticPointMassScore score{x0, cfg};
  const double t = 0.5;
  const double var = kernel_variance(t, cfg);
  const std::vector<cfloat> mu = kernel_mean(x0.data, y.data, t, cfg);
  ComplexSpectrogram mean = x0;
  mean.data = mu;
  double acc = 0;
  const int chains = 1000;
  for (int c = 0; c < chains; ++c) {
    DiffusionState st{x0, y, t};
    st.x.data = sample_kernel(x0.data, y.data, t, cfg, rng);
    for (int k = 0; k < 20; ++k) st = corrector_step(st, score, cfg, scfg, rng);
    acc += std::pow(dist(st.x, mean), 2) / static_cast<double>(x0.size());
  }
  const double ratio = acc / chains / var;
  CHECK(ratio >= 0.5);
  CHECK(ratio <= 2.0);
}

TEST_CASE("sampling grid", "[sampler]") {
  const SdeConfig cfg;
  SamplerConfig scfg;
  scfg.n_steps = 10;
  std::vector<double> times;
  const ScoreFn rec = [&](const ComplexSpectrogram& x, const ComplexSpectrogram&, double t) {
    times.push_back(t);
    return x.zeros_like();
  };
  Rng rng(5);
  ComplexSpectrogram y(3, 2);
  std::vector<TraceRow> trace;
  sample(y, rec, cfg, scfg, rng, &trace);
  REQUIRE(times.size() == 20);
  CHECK(times.front() == cfg.t_max);
  for (double t : times) CHECK(t >= cfg.t_eps);
  REQUIRE(trace.size() == 10);
  for (std::size_t k = 1; k < trace.size(); ++k) CHECK(trace[k].sigma < trace[k - 1].sigma);
  CHECK(trace.back().t == Catch::Approx(cfg.t_eps + (cfg.t_max - cfg.t_eps) / 10));
  CHECK(grid_time(10, cfg, 10) == Catch::Approx(cfg.t_eps));

  times.clear();
  scfg.scheme = SamplerScheme::EulerMaruyama;
  sample(y, rec, cfg, scfg, rng);
  CHECK(times.size() == 10);
}

TEST_CASE("sampling with the exact score recovers x0 within the kernel bound", "[sampler]") {
  const SdeConfig cfg;
  const SamplerConfig scfg;
  Rng rng(6);
  const ComplexSpectrogram x0 = random_spec(16, 4, rng), y = random_spec(16, 4, rng);
  const AnalyticPointMassScore score{x0, cfg};
  const double bias = (1 - mean_weight(cfg.t_eps, cfg)) * dist(y, x0);
  const double spread = kernel_std(cfg.t_eps, cfg) * std::sqrt(static_cast<double>(x0.size()));
  double err = 0;
  const int trials = 100;
  for (int i = 0; i < trials; ++i) err += dist(sample(y, ScoreFn(score), cfg, scfg, rng), x0);
  err /= trials;
  INFO("mean error " << err << ", bias " << bias << ", spread " << spread);
  CHECK(err <= bias + 3 * spread);
  CHECK(err <= 1.5 * (bias + spread));
}

TEST_CASE("more steps reduce the discretisation error", "[sampler]") {
  const SdeConfig cfg;
  Rng rng(7);
  const ComplexSpectrogram x0 = random_spec(16, 4, rng), y = random_spec(16, 4, rng);
  const ScoreFn score = AnalyticPointMassScore{x0, cfg};
  SamplerConfig one, fifty;
  one.n_steps = 1;
  double e1 = 0, e50 = 0;
  for (int i = 0; i < 100; ++i) {
    e1 += dist(sample(y, score, cfg, one, rng), x0);
    e50 += dist(sample(y, score, cfg, fifty, rng), x0);
  }
  CHECK(e50 < e1);
}

TEST_CASE("sampling is deterministic under a seed", "[sampler]") {
  const SdeConfig cfg;
  Rng rng(8);
  const ComplexSpectrogram x0 = random_spec(8, 3, rng), y = random_spec(8, 3, rng);
  const ScoreFn score = AnalyticPointMassScore{x0, cfg};
  Rng a(42), b(42);
  CHECK(sample(y, score, cfg, {}, a).data == sample(y, score, cfg, {}, b).data);
}
