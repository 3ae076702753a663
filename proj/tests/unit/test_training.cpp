#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "sde_restore/training.hpp"

using namespace sde_restore;

namespace {

NetParams<float> scalar_params(float v) {
  NetParams<float> p;
  p.tensors.push_back({"theta", {1}, {v}});
  return p;
}

ComplexSpectrogram random_spec(int F, int T, Rng& rng, double sd = 0.3) {
  ComplexSpectrogram s(F, T);
  for (auto& v : s.data) v = cfloat(static_cast<float>(sd * rng.normal()), static_cast<float>(sd * rng.normal()));
  return s;
}

// E_t[1 / sigma(t)^2] for t ~ U[t_eps, T] by composite Simpson quadrature.
double mean_inverse_variance(const SdeConfig& cfg) {
  const int n = 20000;
  const double a = cfg.t_eps, b = cfg.t_max, h = (b - a) / n;
  double acc = 1.0 / kernel_variance(a, cfg) + 1.0 / kernel_variance(b, cfg);
  for (int i = 1; i < n; ++i) acc += (i % 2 ? 4.0 : 2.0) / kernel_variance(a + i * h, cfg);
  return acc * h / 3.0 / (b - a);
}

ScoreNetConfig tiny_net(NetMode mode) {
  ScoreNetConfig c;
  c.levels = 2;
  c.channels = {8, 8};
  c.embed_dim = 16;
  c.mode = mode;
  return c;
}

}  // namespace

TEST_CASE("Adam update matches a hand trace", "[training]") {
  TrainConfig cfg;
  cfg.lr = 1e-2;
  NetParams<float> p = scalar_params(0.5f);
  AdamState<float> st = adam_init(p);
  adam_step(p, scalar_params(0.0f), st, cfg);
  CHECK(p.tensors[0].value[0] == 0.5f);

  // independent trace: m_k, v_k recursions with bias correction
  p = scalar_params(0.5f);
  st = adam_init(p);
  double m = 0, v = 0, theta = 0.5;
  const double gs[] = {1.0, 0.5, -2.0, 0.25};
  for (int k = 1; k <= 4; ++k) {
    const double g = gs[k - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    theta -= cfg.lr * (m / (1 - std::pow(0.9, k))) / (std::sqrt(v / (1 - std::pow(0.999, k))) + 1e-8);
    adam_step(p, scalar_params(static_cast<float>(g)), st, cfg);
    CHECK(p.tensors[0].value[0] == Catch::Approx(theta).epsilon(1e-6));
    if (k == 1) CHECK(0.5 - p.tensors[0].value[0] == Catch::Approx(cfg.lr / (1 + 1e-8)).epsilon(1e-5));
  }
  CHECK(st.step == 4);
}

TEST_CASE("EMA recursion", "[training]") {
  NetParams<float> p = scalar_params(2.0f);
  NetParams<float> ema = p;
  for (int i = 0; i < 10; ++i) ema_update(ema, p, 0.999);
  CHECK(ema.tensors[0].value[0] == 2.0f);

  NetParams<float> e0 = scalar_params(-1.0f);
  ema_update(e0, p, 0.0);
  CHECK(e0.tensors[0].value[0] == 2.0f);

  NetParams<float> e = scalar_params(5.0f);
  const int k = 50;
  for (int i = 0; i < k; ++i) {
    const double before = std::abs(e.tensors[0].value[0] - 2.0);
    ema_update(e, p, 0.9);
    const double after = std::abs(e.tensors[0].value[0] - 2.0);
    REQUIRE(after == Catch::Approx(0.9 * before).epsilon(1e-4));
  }
  CHECK(e.tensors[0].value[0] == Catch::Approx(2.0 + 3.0 * std::pow(0.9, k)).epsilon(1e-5));
}

TEST_CASE("DSM loss vanishes for the exact kernel score", "[training]") {
  const SdeConfig sde;
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<cdouble> x0(64), y(64), z(64);
    for (auto& v : x0) v = rng.complex_normal();
    for (auto& v : y) v = rng.complex_normal();
    for (auto& v : z) v = rng.complex_normal();
    const double t = rng.uniform(sde.t_eps, sde.t_max);
    auto exact = [&](const std::vector<cdouble>& xt, const std::vector<cdouble>& yy, double tt) {
      return kernel_score(xt, x0, yy, tt, sde);
    };
    const double loss = dsm_sample_loss(exact, x0, y, t, z, sde);
    REQUIRE(loss >= 0.0);
    REQUIRE(loss <= 1e-10);
  }
}

TEST_CASE("zero-initialised network starts at the quadrature loss", "[training]") {
  const SdeConfig sde;
  const ScoreNetConfig cfg = tiny_net(NetMode::Generative);
  Rng rng(2);
  const ScoreNetwork<float> net{cfg, sde, init_params<float>(cfg, rng)};
  const int F = 8, T = 8, n = 20000;
  std::vector<PatchPair> batch;
  for (int i = 0; i < n; ++i) batch.push_back({random_spec(F, T, rng), random_spec(F, T, rng), derive_seed(3, i)});
  const double loss = dsm_loss(net, batch, false).loss;
  const double expected = F * T * mean_inverse_variance(sde);
  CHECK(loss == Catch::Approx(expected).epsilon(0.05));
}

TEST_CASE("MSE loss properties", "[training]") {
  const ScoreNetConfig cfg = tiny_net(NetMode::Discriminative);
  Rng rng(4);
  const ScoreNetwork<float> net{cfg, {}, init_params<float>(cfg, rng)};
  std::vector<PatchPair> batch;
  double expect = 0;
  for (int i = 0; i < 5; ++i) {
    batch.push_back({random_spec(8, 8, rng), random_spec(8, 8, rng), 0});
    for (const auto& v : batch.back().clean.data) expect += std::norm(std::complex<double>(v));
  }
  const double loss = mse_loss(net, batch).loss;
  CHECK(loss == Catch::Approx(expect / 5).epsilon(1e-9));
  std::vector<PatchPair> rev(batch.rbegin(), batch.rend());
  CHECK(mse_loss(net, rev).loss == Catch::Approx(loss).epsilon(1e-12));

  std::vector<PatchPair> silent{{ComplexSpectrogram(8, 8), random_spec(8, 8, rng), 0}};
  CHECK(mse_loss(net, silent).loss == 0.0);
  CHECK_THROWS_AS(dsm_loss(net, batch), Error);
}

TEST_CASE("DSM gradient estimate is unbiased in z", "[training]") {
  // one-parameter model s = -theta (x_t - mu) / sigma^2; per draw the loss is
  // (1 - theta)^2 |z|^2 / sigma^2, so E[dL/dtheta] = -2 (1 - theta) d / sigma^2
  const SdeConfig sde;
  const double t = 0.4, theta = 0.3, sd = kernel_std(t, sde);
  const int d = 4;
  Rng rng(5);
  std::vector<cdouble> x0(d), y(d);
  for (auto& v : x0) v = rng.complex_normal();
  for (auto& v : y) v = rng.complex_normal();
  auto model = [&](double th) {
    return [&, th](const std::vector<cdouble>& xt, const std::vector<cdouble>& yy, double tt) {
      const auto mu = kernel_mean(x0, yy, tt, sde);
      std::vector<cdouble> s(xt.size());
      for (std::size_t i = 0; i < s.size(); ++i) s[i] = -th * (xt[i] - mu[i]) / (sd * sd);
      return s;
    };
  };
  const double expected = -2 * (1 - theta) * d / (sd * sd);
  // per-draw gradient std: 2 (1 - theta) sqrt(d / 4 * 4) / sigma^2 with Var|z|^2 = 1 per bin
  const double per_draw_sd = 2 * (1 - theta) * std::sqrt(static_cast<double>(d)) / (sd * sd);
  double prev_err = 1e300;
  for (int n : {100, 10000, 1000000}) {
    double acc = 0;
    std::vector<cdouble> z(d);
    for (int i = 0; i < n; ++i) {
      for (auto& v : z) v = rng.complex_normal();
      const double h = 1e-3;
      acc += (dsm_sample_loss(model(theta + h), x0, y, t, z, sde) - dsm_sample_loss(model(theta - h), x0, y, t, z, sde)) /
             (2 * h);
    }
    const double err = std::abs(acc / n - expected);
    CHECK(err < 4 * per_draw_sd / std::sqrt(n));
    if (n >= 10000) CHECK(err < prev_err * 2);
    prev_err = err;
  }
}

TEST_CASE("early stopping rule", "[training]") {
  EarlyStopping es{2};
  CHECK(es.update(5.0, 1));
  CHECK_FALSE(es.update(5.0, 2));
  CHECK_FALSE(es.should_stop());
  CHECK(es.update(4.0, 3));
  CHECK_FALSE(es.update(4.5, 4));
  CHECK_FALSE(es.update(4.1, 5));
  CHECK(es.should_stop());
  CHECK(es.best_epoch == 3);
}

TEST_CASE("validation split", "[training]") {
  const TrainSplit s = split_dataset(200, 0.1, 7);
  CHECK(s.val.size() == 20);
  CHECK(s.train.size() == 180);
  std::vector<std::size_t> all = s.train;
  all.insert(all.end(), s.val.begin(), s.val.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) REQUIRE(all[i] == i);
  CHECK(split_dataset(200, 0.1, 7).val == s.val);
  CHECK(split_dataset(200, 0.1, 8).val != s.val);
  CHECK(split_dataset(1, 0.1, 7).val.size() == 1);
}

namespace {
std::vector<TrainExample> point_mass_data() {
  Rng rng(11);
  TrainExample ex;
  ex.id = "pm";
  ex.clean = random_spec(16, 16, rng);
  // y = x0, so the kernel mean (and hence the exact score) is computable from the network inputs
  ex.corrupted = ex.clean;
  return {ex};
}
}  // namespace

TEST_CASE("training on a single pair drives the DSM loss down", "[training]") {
  const SdeConfig sde;
  TrainConfig cfg;
  cfg.lr = 1e-2;
  cfg.batch_size = 8;
  cfg.patch_frames = 16;
  cfg.max_epochs = 500;  // one step per epoch
  cfg.patience = 500;
  cfg.ema_decay = 0.9;
  cfg.val_fraction = 0.0;  // validate on the pair itself
  cfg.val_draws = 25;
  cfg.seed = 4;
  // eight copies of the pair: one batch of 8 patches per epoch
  const std::vector<TrainExample> data(8, point_mass_data().front());
  const TrainResult r = train(data, tiny_net(NetMode::Generative), cfg, sde);
  REQUIRE(r.curve.size() == 500);
  REQUIRE(r.steps == 500);
  const double initial = 16 * 16 * mean_inverse_variance(sde);
  CHECK(r.curve.front().val_loss == Catch::Approx(initial).epsilon(0.1));
  CHECK(r.best_val_loss < 0.5 * initial);
  // noisy per-step losses: compare windowed means
  auto window = [&](std::size_t a, std::size_t b) {
    double m = 0;
    for (std::size_t i = a; i < b; ++i) m += r.curve[i].train_loss;
    return m / static_cast<double>(b - a);
  };
  CHECK(window(400, 500) < 0.5 * initial);
  CHECK(window(400, 500) < window(0, 100));
}

TEST_CASE("adversarial learning rate stops after patience epochs", "[training]") {
  Rng rng(12);
  std::vector<TrainExample> data;
  for (int i = 0; i < 4; ++i) {
    TrainExample ex;
    ex.clean = random_spec(8, 8, rng);
    ex.corrupted = ex.clean;
    data.push_back(ex);
  }
  TrainConfig cfg;
  cfg.lr = 10.0;
  cfg.ema_decay = 1e-6;
  cfg.patience = 1;
  cfg.val_fraction = 0.0;
  cfg.batch_size = 4;
  cfg.patch_frames = 8;
  cfg.max_epochs = 50;
  const TrainResult r = train(data, tiny_net(NetMode::Discriminative), cfg, {});
  INFO("val " << r.curve[0].val_loss << " -> " << (r.curve.size() > 1 ? r.curve[1].val_loss : 0.0));
  CHECK(r.early_stopped);
  CHECK(r.curve.size() == 2);
  CHECK(r.curve[1].val_loss > r.curve[0].val_loss);
  CHECK(r.best_epoch == 1);
  for (const auto& row : r.curve) CHECK(r.best_val_loss <= row.val_loss);
}

TEST_CASE("training is deterministic and keeps the best epoch", "[training]") {
  Rng rng(13);
  std::vector<TrainExample> data;
  for (int i = 0; i < 12; ++i) {
    TrainExample ex;
    ex.clean = random_spec(16, 20, rng);
    ex.corrupted = ex.clean;
    for (auto& v : ex.corrupted.data) v += cfloat(static_cast<float>(0.3 * rng.normal()), 0.0f);
    data.push_back(ex);
  }
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.batch_size = 4;
  cfg.patch_frames = 8;
  cfg.max_epochs = 15;
  cfg.patience = 3;
  cfg.seed = 21;
  for (NetMode mode : {NetMode::Generative, NetMode::Discriminative}) {
    const TrainResult a = train(data, tiny_net(mode), cfg, {});
    cfg.jobs = 3;
    const TrainResult b = train(data, tiny_net(mode), cfg, {});
    cfg.jobs = 1;
    REQUIRE(a.curve.size() == b.curve.size());
    for (std::size_t ti = 0; ti < a.params.tensors.size(); ++ti) {
      CHECK(a.params.tensors[ti].value == b.params.tensors[ti].value);
      CHECK(a.ema.tensors[ti].value == b.ema.tensors[ti].value);
    }
    for (std::size_t i = 0; i < a.curve.size(); ++i) {
      CHECK(a.curve[i].val_loss == b.curve[i].val_loss);
      CHECK(a.curve[i].wall_time_s == 0.0);
      if (static_cast<int>(i) + 1 <= a.best_epoch) CHECK(a.best_val_loss <= a.curve[i].val_loss);
    }
    CHECK(a.best_val_loss == a.curve[static_cast<std::size_t>(a.best_epoch - 1)].val_loss);
  }
}

TEST_CASE("training rejects bad configs and empty data", "[training]") {
  TrainConfig cfg;
  cfg.ema_decay = 1.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK_THROWS_AS(train({}, tiny_net(NetMode::Generative), TrainConfig{}, {}), Error);
}
