// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sde_restore/error.hpp"
#include "sde_restore/manifest.hpp"
#include "sde_restore/parallel.hpp"
#include "sde_restore/random.hpp"
#include "sde_restore/score_net.hpp"
#include "sde_restore/sde.hpp"
#include "sde_restore/signal_io.hpp"
#include "sde_restore/spectral.hpp"

namespace sde_restore {

struct TrainConfig {
  double lr = 1e-4;
  int batch_size = 16;
  double ema_decay = 0.999;
  int max_epochs = 300;
  int patience = 10;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  uint64_t seed = 0;
  int patch_frames = 256;
  double val_fraction = 0.1;
  int val_draws = 1;  // fixed (t, z) draws per validation utterance
  int64_t max_steps = 0;  // 0: no limit
  unsigned jobs = 1;
  bool record_wall_time = false;

  void validate() const {
    require(lr > 0, ErrorKind::Config, "lr must be positive");
    require(batch_size >= 1, ErrorKind::Config, "batch_size must be positive");
    require(ema_decay > 0 && ema_decay < 1, ErrorKind::Config, "ema_decay must lie in (0, 1)");
    require(max_epochs >= 1, ErrorKind::Config, "max_epochs must be positive");
    require(patience >= 1, ErrorKind::Config, "patience must be at least 1");
    require(adam_beta1 >= 0 && adam_beta1 < 1 && adam_beta2 >= 0 && adam_beta2 < 1, ErrorKind::Config,
            "Adam betas must lie in [0, 1)");
    require(adam_eps > 0, ErrorKind::Config, "adam_eps must be positive");
    require(patch_frames >= 1, ErrorKind::Config, "patch_frames must be positive");
    require(val_fraction >= 0 && val_fraction < 1, ErrorKind::Config, "val_fraction must lie in [0, 1)");
    require(val_draws >= 1, ErrorKind::Config, "val_draws must be positive");
    require(max_steps >= 0, ErrorKind::Config, "max_steps must be non-negative");
  }
};

template <class S>
struct AdamState {
  NetParams<S> m, v;
  int64_t step = 0;
};

template <class S>
AdamState<S> adam_init(const NetParams<S>& p) {
  return {p.zeros_like(), p.zeros_like(), 0};
}

template <class S>
void adam_step(NetParams<S>& p, const NetParams<S>& g, AdamState<S>& st, const TrainConfig& cfg) {
  require(p.same_layout(g) && p.same_layout(st.m), ErrorKind::Shape, "Adam: parameter/gradient layout mismatch");
  ++st.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (std::size_t ti = 0; ti < p.tensors.size(); ++ti) {
    auto& pv = p.tensors[ti].value;
    auto& mv = st.m.tensors[ti].value;
    auto& vv = st.v.tensors[ti].value;
    const auto& gv = g.tensors[ti].value;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double gi = gv[i];
      const double m = b1 * mv[i] + (1.0 - b1) * gi;
      const double v = b2 * vv[i] + (1.0 - b2) * gi * gi;
      mv[i] = static_cast<S>(m);
      vv[i] = static_cast<S>(v);
      pv[i] = static_cast<S>(pv[i] - cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.adam_eps));
    }
  }
  p.touch();
}

/// ema <- decay * ema + (1 - decay) * p
template <class S>
void ema_update(NetParams<S>& ema, const NetParams<S>& p, double decay) {
  require(ema.same_layout(p), ErrorKind::Shape, "EMA: layout mismatch");
  for (std::size_t ti = 0; ti < p.tensors.size(); ++ti) {
    auto& ev = ema.tensors[ti].value;
    const auto& pv = p.tensors[ti].value;
    for (std::size_t i = 0; i < pv.size(); ++i)
      ev[i] = static_cast<S>(decay * static_cast<double>(ev[i]) + (1.0 - decay) * static_cast<double>(pv[i]));
  }
  ema.touch();
}

/// ||s(x_t, y, t) + z / sigma(t)||^2 for x_t = mu + sigma z, with any score
/// callable taking and returning std::vector<C>.
template <class C, class Score>
double dsm_sample_loss(Score&& score, const std::vector<C>& x0, const std::vector<C>& y, double t,
                       const std::vector<C>& z, const SdeConfig& cfg) {
  const double sd = kernel_std(t, cfg);
  std::vector<C> xt = kernel_mean(x0, y, t, cfg);
  for (std::size_t i = 0; i < xt.size(); ++i) xt[i] += static_cast<typename C::value_type>(sd) * z[i];
  const std::vector<C> s = score(xt, y, t);
  require(s.size() == xt.size(), ErrorKind::Shape, "score output shape differs from x_t");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += std::norm(std::complex<double>(s[i]) + std::complex<double>(z[i]) / sd);
  return acc;
}

/// Monte-Carlo DSM objective over a batch: t ~ U[t_eps, T] and z drawn per item.
template <class C, class Score>
double dsm_loss(Score&& score, const std::vector<std::pair<std::vector<C>, std::vector<C>>>& batch,
                const SdeConfig& cfg, Rng& rng) {
  require(!batch.empty(), ErrorKind::Parameter, "empty batch");
  double total = 0.0;
  for (const auto& [x0, y] : batch) {
    const double t = rng.uniform(cfg.t_eps, cfg.t_max);
    std::vector<C> z(x0.size());
    for (C& v : z) v = detail::complex_normal_as<C>(rng);
    total += dsm_sample_loss(score, x0, y, t, z, cfg);
  }
  return total / static_cast<double>(batch.size());
}

struct PatchPair {
  ComplexSpectrogram clean;
  ComplexSpectrogram corrupted;
  uint64_t seed = 0;  // t and z draws (generative mode)
  double t = -1.0;    // fixed diffusion time; negative draws t ~ U[t_eps, T]
};

struct LossGrad {
  double loss = 0.0;
  NetParams<float> grads;
};

/// Batch objective of the network (DSM in generative mode, complex MSE in
/// discriminative mode) and, optionally, its parameter gradient.
inline LossGrad network_loss(const ScoreNetwork<float>& net, const std::vector<PatchPair>& batch, bool need_grad,
                             unsigned jobs = 1) {
  require(!batch.empty(), ErrorKind::Parameter, "empty batch");
  const ScoreNetConfig& cfg = net.cfg;
  const SdeConfig& sde = net.sde;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> losses(batch.size());
  std::vector<NetParams<float>> grads(need_grad ? batch.size() : 0);

  parallel_for(batch.size(), jobs, [&](std::size_t i) {
    const PatchPair& item = batch[i];
    require(item.clean.same_shape(item.corrupted), ErrorKind::Shape, "clean/corrupted patch shapes differ");
    const std::size_t n = item.clean.size();
    Tensor3<float> input;
    std::vector<std::complex<double>> target(n);  // residual = output - target
    double sigma = 1.0;
    if (cfg.conditioned()) {
      Rng rng(item.seed);
      const double t = item.t >= 0 ? item.t : rng.uniform(sde.t_eps, sde.t_max);
      sigma = kernel_std(t, sde);
      const double w = mean_weight(t, sde);
      ComplexSpectrogram xt = item.corrupted.zeros_like();
      for (std::size_t k = 0; k < n; ++k) {
        const std::complex<double> z = rng.complex_normal();
        const std::complex<double> mu =
            w * std::complex<double>(item.clean.data[k]) + (1.0 - w) * std::complex<double>(item.corrupted.data[k]);
        const std::complex<double> x = mu + sigma * z;
        xt.data[k] = cfloat(static_cast<float>(x.real()), static_cast<float>(x.imag()));
        target[k] = -z / sigma;
      }
      input = pack_spectrograms<float>({&xt, &item.corrupted});
    } else {
      for (std::size_t k = 0; k < n; ++k) target[k] = item.clean.data[k];
      input = pack_spectrograms<float>({&item.corrupted});
    }
    NetTape<float> tape;
    const Tensor3<float> out = net_forward(net.params, cfg, input, sigma, need_grad ? &tape : nullptr);
    Tensor3<float> gout(2, out.h, out.w);
    double acc = 0.0;
    const int F = item.clean.bins;
    for (int fr = 0; fr < item.clean.frames; ++fr)
      for (int f = 0; f < F; ++f) {
        const std::size_t k = static_cast<std::size_t>(fr) * F + f;
        const std::complex<double> r = std::complex<double>(out(0, f, fr), out(1, f, fr)) - target[k];
        acc += std::norm(r);
        gout(0, f, fr) = static_cast<float>(2.0 * inv_b * r.real());
        gout(1, f, fr) = static_cast<float>(2.0 * inv_b * r.imag());
      }
    require(std::isfinite(acc), ErrorKind::NonFinite,
            "non-finite loss on batch item " + std::to_string(i) + " (sigma=" + std::to_string(sigma) + ")");
    losses[i] = acc;
    if (need_grad) {
      grads[i] = net.params.zeros_like();
      net_backward(tape, cfg, gout, grads[i]);
    }
  });

  LossGrad r;
  for (double l : losses) r.loss += l;
  r.loss *= inv_b;
  if (need_grad) {
    r.grads = std::move(grads[0]);
    for (std::size_t i = 1; i < grads.size(); ++i)
      for (std::size_t ti = 0; ti < r.grads.tensors.size(); ++ti) {
        auto& dst = r.grads.tensors[ti].value;
        const auto& src = grads[i].tensors[ti].value;
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
      }
  }
  return r;
}

inline LossGrad dsm_loss(const ScoreNetwork<float>& net, const std::vector<PatchPair>& batch, bool need_grad = true,
                         unsigned jobs = 1) {
  require(net.cfg.mode == NetMode::Generative, ErrorKind::Parameter, "DSM loss needs a generative network");
  return network_loss(net, batch, need_grad, jobs);
}

inline LossGrad mse_loss(const ScoreNetwork<float>& net, const std::vector<PatchPair>& batch, bool need_grad = true,
                         unsigned jobs = 1) {
  require(net.cfg.mode == NetMode::Discriminative, ErrorKind::Parameter, "MSE loss needs a discriminative network");
  return network_loss(net, batch, need_grad, jobs);
}

/// Stops once `patience` consecutive epochs fail to improve on the best.
struct EarlyStopping {
  int patience = 10;
  double best = std::numeric_limits<double>::infinity();
  int best_epoch = 0;
  int bad_epochs = 0;

  bool update(double val, int epoch) {
    if (val < best) {
      best = val;
      best_epoch = epoch;
      bad_epochs = 0;
      return true;
    }
    ++bad_epochs;
    return false;
  }
  bool should_stop() const { return bad_epochs >= patience; }
};

struct CurveRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double wall_time_s = 0.0;
};

inline void write_curve_csv(const std::filesystem::path& path, const std::vector<CurveRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << "epoch,train_loss,val_loss,lr,wall_time_s\n";
  out.precision(10);
  for (const auto& r : rows) out << r.epoch << "," << r.train_loss << "," << r.val_loss << "," << r.lr << "," << r.wall_time_s << "\n";
}

struct TrainExample {
  std::string id;
  ComplexSpectrogram clean;      // compressed, normalized
  ComplexSpectrogram corrupted;  // compressed, normalized
};

/// Reads every manifest pair and converts it to the network's representation.
inline std::vector<TrainExample> load_examples(const Manifest& manifest, const StftConfig& stft_cfg, int sample_rate_hz,
                                               unsigned jobs = 1) {
  std::vector<TrainExample> out(manifest.rows.size());
  parallel_for(out.size(), jobs, [&](std::size_t i) {
    const ManifestRow& row = manifest.rows[i];
    const Waveform clean = read_wav(manifest.resolve(row.clean));
    const Waveform corrupted = read_wav(manifest.resolve(row.corrupted));
    require(clean.sample_rate_hz == sample_rate_hz && corrupted.sample_rate_hz == sample_rate_hz, ErrorKind::Config,
            row.corrupted + ": sample rate differs from the configured " + std::to_string(sample_rate_hz) + " Hz");
    require(clean.size() == corrupted.size(), ErrorKind::Shape, row.corrupted + ": clean/corrupted lengths differ");
    const NormalizedPair np = normalize_pair(clean, corrupted);
    out[i].id = row.id();
    out[i].clean = compress(stft(np.clean, stft_cfg), stft_cfg.compression_scale);
    out[i].corrupted = compress(stft(np.corrupted, stft_cfg), stft_cfg.compression_scale);
  });
  return out;
}

struct TrainResult {
  NetParams<float> params;  // raw weights of the retained epoch
  NetParams<float> ema;     // EMA weights of the retained epoch
  std::vector<CurveRow> curve;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  int64_t steps = 0;
  bool early_stopped = false;
};

namespace train_detail {
inline constexpr uint64_t kSplitSalt = 0x73706c6974ULL;
inline constexpr uint64_t kInitSalt = 0x696e6974ULL;
inline constexpr uint64_t kOrderSalt = 0x6f72646572ULL;
inline constexpr uint64_t kStepSalt = 0x73746570ULL;
inline constexpr uint64_t kValSalt = 0x76616cULL;

template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_index(i)]);
}
}  // namespace train_detail

struct TrainSplit {
  std::vector<std::size_t> train, val;
};

/// Seeded validation split; with fewer than two examples both sets are the
/// whole dataset.
inline TrainSplit split_dataset(std::size_t n, double val_fraction, uint64_t seed) {
  TrainSplit s;
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (n < 2 || val_fraction <= 0) {
    s.train = idx;
    s.val = idx;
    return s;
  }
  Rng rng(derive_seed(seed, train_detail::kSplitSalt));
  train_detail::shuffle(idx, rng);
  const auto n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(val_fraction * n)), 1, n - 1);
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

using EpochCallback = std::function<void(const CurveRow&)>;

/// Epoch loop with one random patch per utterance per epoch, Adam, EMA and
/// early stopping on the validation objective evaluated with EMA weights.
inline TrainResult train(const std::vector<TrainExample>& data, const ScoreNetConfig& net_cfg, const TrainConfig& cfg,
                         const SdeConfig& sde, const EpochCallback& on_epoch = {}) {
  using namespace train_detail;
  cfg.validate();
  sde.validate();
  net_cfg.validate();
  require(!data.empty(), ErrorKind::Parameter, "training set is empty");
  const auto t0 = std::chrono::steady_clock::now();

  const TrainSplit split = split_dataset(data.size(), cfg.val_fraction, cfg.seed);
  Rng init_rng(derive_seed(cfg.seed, kInitSalt));
  ScoreNetwork<float> net{net_cfg, sde, init_params<float>(net_cfg, init_rng)};
  NetParams<float> ema = net.params;
  AdamState<float> adam = adam_init(net.params);

  // fixed validation patches and draws, identical for every epoch; t runs
  // over a stratified grid so the estimate is not dominated by a few small t
  std::vector<PatchPair> val_batch;
  const std::size_t n_draws = split.val.size() * static_cast<std::size_t>(cfg.val_draws);
  for (std::size_t m = 0; m < n_draws; ++m) {
    const TrainExample& ex = data[split.val[m % split.val.size()]];
    const int offset = std::max(0, (ex.clean.frames - cfg.patch_frames) / 2);
    const double t = sde.t_eps + (static_cast<double>(m) + 0.5) / static_cast<double>(n_draws) * (sde.t_max - sde.t_eps);
    val_batch.push_back({crop_frames(ex.clean, offset, cfg.patch_frames), crop_frames(ex.corrupted, offset, cfg.patch_frames),
                         derive_seed(cfg.seed ^ kValSalt, m), t});
  }
  auto validate_with = [&](const NetParams<float>& weights) {
    const ScoreNetwork<float> eval{net_cfg, sde, weights};
    double total = 0.0;
    for (std::size_t b = 0; b < val_batch.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(val_batch.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<PatchPair> chunk(val_batch.begin() + static_cast<std::ptrdiff_t>(b),
                                         val_batch.begin() + static_cast<std::ptrdiff_t>(e));
      total += network_loss(eval, chunk, false, cfg.jobs).loss * static_cast<double>(chunk.size());
    }
    return total / static_cast<double>(val_batch.size());
  };

  TrainResult result;
  EarlyStopping stopper{cfg.patience};
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::vector<std::size_t> order = split.train;
    Rng order_rng(derive_seed(derive_seed(cfg.seed, kOrderSalt), static_cast<uint64_t>(epoch)));
    shuffle(order, order_rng);

    double epoch_loss = 0.0;
    int epoch_steps = 0;
    bool budget_hit = false;
    for (std::size_t b = 0; b < order.size(); b += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      const uint64_t step_seed = derive_seed(derive_seed(cfg.seed, kStepSalt), static_cast<uint64_t>(result.steps));
      std::vector<PatchPair> batch;
      for (std::size_t j = b; j < e; ++j) {
        const TrainExample& ex = data[order[j]];
        Rng item_rng(derive_seed(step_seed, j - b));
        const Patch clean = extract_patch(ex.clean, cfg.patch_frames, item_rng);
        batch.push_back({clean.spec, crop_frames(ex.corrupted, clean.offset, cfg.patch_frames), item_rng.next_u64()});
      }
      LossGrad lg = network_loss(net, batch, true, cfg.jobs);
      adam_step(net.params, lg.grads, adam, cfg);
      ema_update(ema, net.params, cfg.ema_decay);
      epoch_loss += lg.loss;
      ++epoch_steps;
      ++result.steps;
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) {
        budget_hit = true;
        break;
      }
    }

    CurveRow row;
    row.epoch = epoch;
    row.train_loss = epoch_loss / std::max(1, epoch_steps);
    row.val_loss = validate_with(ema);
    row.lr = cfg.lr;
    if (cfg.record_wall_time) row.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    require(std::isfinite(row.val_loss), ErrorKind::NonFinite, "non-finite validation loss at epoch " + std::to_string(epoch));
    result.curve.push_back(row);
    if (on_epoch) on_epoch(row);

    if (stopper.update(row.val_loss, epoch)) {
      result.params = net.params;
      result.ema = ema;
      result.best_epoch = epoch;
      result.best_val_loss = row.val_loss;
    }
    if (budget_hit) break;
    if (stopper.should_stop()) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

}  // namespace sde_restore
