// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sde_restore/error.hpp"
#include "sde_restore/random.hpp"
#include "sde_restore/sde.hpp"
#include "sde_restore/spectral.hpp"

namespace sde_restore {

enum class NetMode { Generative, Discriminative };

inline const char* to_string(NetMode m) { return m == NetMode::Generative ? "generative" : "discriminative"; }

inline NetMode net_mode_from_string(const std::string& s) {
  if (s == "generative") return NetMode::Generative;
  if (s == "discriminative") return NetMode::Discriminative;
  fail(ErrorKind::Parameter, "unknown mode '" + s + "' (expected generative or discriminative)");
}

/// Small U-Net: `levels` encoder stages (3x3 conv, ReLU, 2x2 average pool)
/// and a mirrored decoder (nearest x2 upsample, 3x3 conv, ReLU, + skip).
struct ScoreNetConfig {
  int levels = 3;
  std::vector<int> channels{16, 32, 64};
  int embed_dim = 64;
  NetMode mode = NetMode::Generative;

  void validate() const {
    require(levels >= 1, ErrorKind::Config, "levels must be at least 1");
    require(static_cast<int>(channels.size()) == levels, ErrorKind::Config,
            "channels list must have one entry per level");
    for (int c : channels) require(c >= 1, ErrorKind::Config, "channel widths must be positive");
    require(embed_dim >= 2 && embed_dim % 2 == 0, ErrorKind::Config, "embed_dim must be an even number >= 2");
  }
  bool conditioned() const { return mode == NetMode::Generative; }
  int in_channels() const { return conditioned() ? 4 : 2; }
  int multiple() const { return 1 << levels; }
};

template <class S>
struct Tensor3 {
  int c = 0, h = 0, w = 0;
  std::vector<S> v;

  Tensor3() = default;
  Tensor3(int c_, int h_, int w_) : c(c_), h(h_), w(w_), v(static_cast<std::size_t>(c_) * h_ * w_, S(0)) {}

  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  S& operator()(int ci, int hi, int wi) { return v[(static_cast<std::size_t>(ci) * h + hi) * w + wi]; }
  const S& operator()(int ci, int hi, int wi) const { return v[(static_cast<std::size_t>(ci) * h + hi) * w + wi]; }
};

template <class S>
struct ParamTensor {
  std::string name;
  std::vector<int> dims;
  std::vector<S> value;
};

/// Named parameter tensors. `version` changes on every mutation so stale
/// backward tapes can be detected.
template <class S>
struct NetParams {
  std::vector<ParamTensor<S>> tensors;
  uint64_t version = 0;

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.value.size();
    return n;
  }
  void touch() { ++version; }
  NetParams zeros_like() const {
    NetParams z;
    z.tensors = tensors;
    for (auto& t : z.tensors) std::fill(t.value.begin(), t.value.end(), S(0));
    return z;
  }
  bool same_layout(const NetParams& o) const {
    if (tensors.size() != o.tensors.size()) return false;
    for (std::size_t i = 0; i < tensors.size(); ++i)
      if (tensors[i].name != o.tensors[i].name || tensors[i].dims != o.tensors[i].dims) return false;
    return true;
  }
};

template <class T, class S>
NetParams<T> cast_params(const NetParams<S>& p) {
  NetParams<T> out;
  out.version = p.version;
  for (const auto& t : p.tensors) out.tensors.push_back({t.name, t.dims, std::vector<T>(t.value.begin(), t.value.end())});
  return out;
}

struct LayerSlots {
  int w = -1, b = -1, emb = -1;
  int in = 0, out = 0, k = 3;
};

struct NetLayout {
  std::vector<LayerSlots> enc, dec;
  LayerSlots head;
};

inline NetLayout net_layout(const ScoreNetConfig& cfg) {
  cfg.validate();
  const int L = cfg.levels;
  NetLayout lay;
  lay.enc.resize(static_cast<std::size_t>(L));
  lay.dec.resize(static_cast<std::size_t>(L));
  int idx = 0;
  for (int l = 0; l < L; ++l) {
    LayerSlots& s = lay.enc[static_cast<std::size_t>(l)];
    s.in = l == 0 ? cfg.in_channels() : cfg.channels[static_cast<std::size_t>(l - 1)];
    s.out = cfg.channels[static_cast<std::size_t>(l)];
    s.w = idx++;
    s.b = idx++;
    if (cfg.conditioned()) s.emb = idx++;
  }
  for (int l = L - 1; l >= 0; --l) {
    LayerSlots& s = lay.dec[static_cast<std::size_t>(l)];
    s.in = l == L - 1 ? cfg.channels[static_cast<std::size_t>(L - 1)] : cfg.channels[static_cast<std::size_t>(l + 1)];
    s.out = cfg.channels[static_cast<std::size_t>(l)];
    s.w = idx++;
    s.b = idx++;
    if (cfg.conditioned()) s.emb = idx++;
  }
  lay.head.in = cfg.channels[0];
  lay.head.out = 2;
  lay.head.k = 1;
  lay.head.w = idx++;
  lay.head.b = idx++;
  return lay;
}

/// Zero-valued parameters with the layout implied by `cfg`.
template <class S>
NetParams<S> empty_params(const ScoreNetConfig& cfg) {
  const NetLayout lay = net_layout(cfg);
  NetParams<S> p;
  auto add = [&](const std::string& name, std::vector<int> dims) {
    std::size_t n = 1;
    for (int d : dims) n *= static_cast<std::size_t>(d);
    p.tensors.push_back({name, std::move(dims), std::vector<S>(n, S(0))});
  };
  auto add_layer = [&](const std::string& prefix, const LayerSlots& s) {
    add(prefix + ".weight", {s.out, s.in, s.k, s.k});
    add(prefix + ".bias", {s.out});
    if (s.emb >= 0) add(prefix + ".embed", {s.out, cfg.embed_dim});
  };
  for (int l = 0; l < cfg.levels; ++l) add_layer("enc" + std::to_string(l), lay.enc[static_cast<std::size_t>(l)]);
  for (int l = cfg.levels - 1; l >= 0; --l) add_layer("dec" + std::to_string(l), lay.dec[static_cast<std::size_t>(l)]);
  add("head.weight", {2, lay.head.in, 1, 1});
  add("head.bias", {2});
  return p;
}

/// He-normal 3x3 weights, everything else zero (so the initial output is 0).
template <class S>
NetParams<S> init_params(const ScoreNetConfig& cfg, Rng& rng) {
  NetParams<S> p = empty_params<S>(cfg);
  const NetLayout lay = net_layout(cfg);
  auto he = [&](const LayerSlots& s) {
    const double sd = std::sqrt(2.0 / (static_cast<double>(s.in) * s.k * s.k));
    for (S& v : p.tensors[static_cast<std::size_t>(s.w)].value) v = static_cast<S>(sd * rng.normal());
  };
  for (const auto& s : lay.enc) he(s);
  for (int l = cfg.levels - 1; l >= 0; --l) he(lay.dec[static_cast<std::size_t>(l)]);
  return p;
}

inline constexpr double kEmbedMinFreq = 0.25;
inline constexpr double kEmbedMaxFreq = 25.0;

/// Sinusoidal features of ln sigma: dim/2 geometrically spaced frequencies.
inline std::vector<double> noise_embedding(double log_sigma, int dim) {
  const int k = dim / 2;
  std::vector<double> e(static_cast<std::size_t>(dim));
  for (int i = 0; i < k; ++i) {
    const double frac = k > 1 ? static_cast<double>(i) / (k - 1) : 0.0;
    const double f = kEmbedMinFreq * std::pow(kEmbedMaxFreq / kEmbedMinFreq, frac);
    e[static_cast<std::size_t>(i)] = std::sin(f * log_sigma);
    e[static_cast<std::size_t>(k + i)] = std::cos(f * log_sigma);
  }
  return e;
}

template <class S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
struct NetTape {
  struct Stage {
    RowMat<S> col;
    std::vector<uint8_t> mask;
    int h = 0, w = 0;
  };
  const NetParams<S>* params = nullptr;
  uint64_t version = 0;
  bool used = false;
  int F = 0, T = 0, H = 0, W = 0;
  double sigma = 1.0;
  std::vector<S> emb;
  std::vector<Stage> enc, dec;
  RowMat<S> head_in;
};

namespace net_detail {

// 3x3 patches with zero padding: row ci*9 + ky*3 + kx, column h*W + w.
template <class S>
RowMat<S> im2col(const Tensor3<S>& x) {
  const int H = x.h, W = x.w;
  RowMat<S> col = RowMat<S>::Zero(static_cast<Eigen::Index>(x.c) * 9, static_cast<Eigen::Index>(x.plane()));
  for (int ci = 0; ci < x.c; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        S* row = col.row(ci * 9 + ky * 3 + kx).data();
        const int dy = ky - 1, dx = kx - 1;
        const int w0 = std::max(0, -dx), w1 = std::min(W, W - dx);
        for (int h = std::max(0, -dy); h < std::min(H, H - dy); ++h) {
          const S* src = &x(ci, h + dy, 0);
          S* dst = row + static_cast<std::size_t>(h) * W;
          for (int w = w0; w < w1; ++w) dst[w] = src[w + dx];
        }
      }
  return col;
}

template <class S>
Tensor3<S> col2im(const RowMat<S>& col, int C, int H, int W) {
  Tensor3<S> x(C, H, W);
  for (int ci = 0; ci < C; ++ci)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const S* row = col.row(ci * 9 + ky * 3 + kx).data();
        const int dy = ky - 1, dx = kx - 1;
        const int w0 = std::max(0, -dx), w1 = std::min(W, W - dx);
        for (int h = std::max(0, -dy); h < std::min(H, H - dy); ++h) {
          S* dst = &x(ci, h + dy, 0);
          const S* src = row + static_cast<std::size_t>(h) * W;
          for (int w = w0; w < w1; ++w) dst[w + dx] += src[w];
        }
      }
  return x;
}

template <class S>
Tensor3<S> avgpool2(const Tensor3<S>& x) {
  Tensor3<S> y(x.c, x.h / 2, x.w / 2);
  for (int c = 0; c < y.c; ++c)
    for (int i = 0; i < y.h; ++i)
      for (int j = 0; j < y.w; ++j)
        y(c, i, j) = S(0.25) * (x(c, 2 * i, 2 * j) + x(c, 2 * i, 2 * j + 1) + x(c, 2 * i + 1, 2 * j) +
                               x(c, 2 * i + 1, 2 * j + 1));
  return y;
}

template <class S>
Tensor3<S> avgpool2_backward(const Tensor3<S>& g, int H, int W) {
  Tensor3<S> x(g.c, H, W);
  for (int c = 0; c < g.c; ++c)
    for (int i = 0; i < g.h; ++i)
      for (int j = 0; j < g.w; ++j) {
        const S v = S(0.25) * g(c, i, j);
        x(c, 2 * i, 2 * j) = v;
        x(c, 2 * i, 2 * j + 1) = v;
        x(c, 2 * i + 1, 2 * j) = v;
        x(c, 2 * i + 1, 2 * j + 1) = v;
      }
  return x;
}

template <class S>
Tensor3<S> upsample2(const Tensor3<S>& x) {
  Tensor3<S> y(x.c, x.h * 2, x.w * 2);
  for (int c = 0; c < x.c; ++c)
    for (int i = 0; i < y.h; ++i)
      for (int j = 0; j < y.w; ++j) y(c, i, j) = x(c, i / 2, j / 2);
  return y;
}

template <class S>
Tensor3<S> upsample2_backward(const Tensor3<S>& g) {
  Tensor3<S> x(g.c, g.h / 2, g.w / 2);
  for (int c = 0; c < g.c; ++c)
    for (int i = 0; i < g.h; ++i)
      for (int j = 0; j < g.w; ++j) x(c, i / 2, j / 2) += g(c, i, j);
  return x;
}

template <class S>
Eigen::Map<const RowMat<S>> weight_map(const NetParams<S>& p, const LayerSlots& s) {
  return {p.tensors[static_cast<std::size_t>(s.w)].value.data(), s.out, static_cast<Eigen::Index>(s.in) * s.k * s.k};
}

template <class S>
Eigen::Map<RowMat<S>> weight_map(NetParams<S>& p, const LayerSlots& s) {
  return {p.tensors[static_cast<std::size_t>(s.w)].value.data(), s.out, static_cast<Eigen::Index>(s.in) * s.k * s.k};
}

// conv + bias (+ embedding bias) + ReLU; records what backward needs.
template <class S>
Tensor3<S> conv_relu(const NetParams<S>& p, const LayerSlots& s, const Tensor3<S>& x, const std::vector<S>& emb,
                     typename NetTape<S>::Stage& st) {
  st.col = im2col(x);
  st.h = x.h;
  st.w = x.w;
  RowMat<S> pre = weight_map(p, s) * st.col;
  const auto& bias = p.tensors[static_cast<std::size_t>(s.b)].value;
  const int E = static_cast<int>(emb.size());
  for (int co = 0; co < s.out; ++co) {
    S add = bias[static_cast<std::size_t>(co)];
    if (s.emb >= 0) {
      const S* ew = p.tensors[static_cast<std::size_t>(s.emb)].value.data() + static_cast<std::size_t>(co) * E;
      for (int k = 0; k < E; ++k) add += ew[k] * emb[static_cast<std::size_t>(k)];
    }
    pre.row(co).array() += add;
  }
  Tensor3<S> y(s.out, x.h, x.w);
  st.mask.resize(y.v.size());
  for (std::size_t i = 0; i < y.v.size(); ++i) {
    const S v = pre.data()[i];
    st.mask[i] = v > S(0);
    y.v[i] = v > S(0) ? v : S(0);
  }
  return y;
}

// Takes the gradient w.r.t. the ReLU output, accumulates parameter
// gradients and returns the gradient w.r.t. the conv input.
template <class S>
Tensor3<S> conv_relu_backward(const NetParams<S>& p, NetParams<S>& grads, const LayerSlots& s,
                              const typename NetTape<S>::Stage& st, const Tensor3<S>& g, const std::vector<S>& emb) {
  RowMat<S> gpre(s.out, static_cast<Eigen::Index>(g.plane()));
  for (std::size_t i = 0; i < g.v.size(); ++i) gpre.data()[i] = st.mask[i] ? g.v[i] : S(0);
  weight_map(grads, s).noalias() += gpre * st.col.transpose();
  auto& gb = grads.tensors[static_cast<std::size_t>(s.b)].value;
  const int E = static_cast<int>(emb.size());
  for (int co = 0; co < s.out; ++co) {
    const S sum = gpre.row(co).sum();
    gb[static_cast<std::size_t>(co)] += sum;
    if (s.emb >= 0) {
      S* ge = grads.tensors[static_cast<std::size_t>(s.emb)].value.data() + static_cast<std::size_t>(co) * E;
      for (int k = 0; k < E; ++k) ge[k] += sum * emb[static_cast<std::size_t>(k)];
    }
  }
  const RowMat<S> gcol = weight_map(p, s).transpose() * gpre;
  return col2im(gcol, s.in, st.h, st.w);
}

}  // namespace net_detail

/// Network pass on an unpadded [in_channels, F, T] input. `sigma` is the
/// kernel std at the evaluation time (ignored in discriminative mode).
/// Returns [2, F, T].
template <class S>
Tensor3<S> net_forward(const NetParams<S>& p, const ScoreNetConfig& cfg, const Tensor3<S>& input, double sigma,
                       NetTape<S>* tape = nullptr) {
  using namespace net_detail;
  const NetLayout lay = net_layout(cfg);
  require(input.c == cfg.in_channels(), ErrorKind::Shape,
          "network expects " + std::to_string(cfg.in_channels()) + " input channels, got " + std::to_string(input.c));
  require(input.h >= 1 && input.w >= 1, ErrorKind::Shape, "empty network input");
  const auto expected = static_cast<std::size_t>(lay.head.b + 1);
  require(p.tensors.size() == expected, ErrorKind::Shape, "parameter set does not match the network config");
  if (cfg.conditioned())
    require(sigma > 0 && std::isfinite(sigma), ErrorKind::NumericGuard, "noise level must be positive");

  NetTape<S> local;
  NetTape<S>& tp = tape ? *tape : local;
  const int m = cfg.multiple();
  tp.params = &p;
  tp.version = p.version;
  tp.used = false;
  tp.F = input.h;
  tp.T = input.w;
  tp.H = (input.h + m - 1) / m * m;
  tp.W = (input.w + m - 1) / m * m;
  tp.sigma = sigma;
  tp.emb.clear();
  if (cfg.conditioned()) {
    for (double v : noise_embedding(std::log(sigma), cfg.embed_dim)) tp.emb.push_back(static_cast<S>(v));
  }
  tp.enc.assign(static_cast<std::size_t>(cfg.levels), {});
  tp.dec.assign(static_cast<std::size_t>(cfg.levels), {});

  Tensor3<S> x(input.c, tp.H, tp.W);
  for (int c = 0; c < input.c; ++c)
    for (int h = 0; h < input.h; ++h)
      for (int w = 0; w < input.w; ++w) x(c, h, w) = input(c, h, w);

  std::vector<Tensor3<S>> skips(static_cast<std::size_t>(cfg.levels));
  for (int l = 0; l < cfg.levels; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    skips[ul] = conv_relu(p, lay.enc[ul], x, tp.emb, tp.enc[ul]);
    x = avgpool2(skips[ul]);
  }
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    Tensor3<S> act = conv_relu(p, lay.dec[ul], upsample2(x), tp.emb, tp.dec[ul]);
    for (std::size_t i = 0; i < act.v.size(); ++i) act.v[i] += skips[ul].v[i];
    x = std::move(act);
  }
  tp.head_in = Eigen::Map<const RowMat<S>>(x.v.data(), x.c, static_cast<Eigen::Index>(x.plane()));
  RowMat<S> out = weight_map(p, lay.head) * tp.head_in;
  const auto& hb = p.tensors[static_cast<std::size_t>(lay.head.b)].value;
  for (int c = 0; c < 2; ++c) out.row(c).array() += hb[static_cast<std::size_t>(c)];

  const S scale = cfg.conditioned() ? static_cast<S>(1.0 / sigma) : S(1);
  Tensor3<S> y(2, input.h, input.w);
  for (int c = 0; c < 2; ++c)
    for (int h = 0; h < input.h; ++h)
      for (int w = 0; w < input.w; ++w) y(c, h, w) = scale * out(c, static_cast<Eigen::Index>(h) * tp.W + w);
  return y;
}

/// Reverse pass for the tape of the last forward call. Parameter gradients
/// are accumulated into `grads`; the input gradient is written if requested.
template <class S>
void net_backward(NetTape<S>& tp, const ScoreNetConfig& cfg, const Tensor3<S>& grad_out, NetParams<S>& grads,
                  Tensor3<S>* grad_input = nullptr) {
  using namespace net_detail;
  require(tp.params != nullptr, ErrorKind::State, "backward called without a forward pass");
  require(tp.params->version == tp.version, ErrorKind::State, "parameters changed since the forward pass");
  require(!tp.used, ErrorKind::State, "tape already consumed by a backward pass");
  require(grad_out.c == 2 && grad_out.h == tp.F && grad_out.w == tp.T, ErrorKind::Shape,
          "output gradient shape does not match the forward output");
  require(grads.same_layout(*tp.params), ErrorKind::Shape, "gradient buffer layout mismatch");
  tp.used = true;
  const NetParams<S>& p = *tp.params;
  const NetLayout lay = net_layout(cfg);

  const S scale = cfg.conditioned() ? static_cast<S>(1.0 / tp.sigma) : S(1);
  RowMat<S> g = RowMat<S>::Zero(2, static_cast<Eigen::Index>(tp.H) * tp.W);
  for (int c = 0; c < 2; ++c)
    for (int h = 0; h < tp.F; ++h)
      for (int w = 0; w < tp.T; ++w) g(c, static_cast<Eigen::Index>(h) * tp.W + w) = scale * grad_out(c, h, w);

  weight_map(grads, lay.head).noalias() += g * tp.head_in.transpose();
  auto& ghb = grads.tensors[static_cast<std::size_t>(lay.head.b)].value;
  for (int c = 0; c < 2; ++c) ghb[static_cast<std::size_t>(c)] += g.row(c).sum();
  const RowMat<S> gx_m = weight_map(p, lay.head).transpose() * g;
  Tensor3<S> gx(lay.head.in, tp.H, tp.W);
  std::copy(gx_m.data(), gx_m.data() + gx_m.size(), gx.v.begin());

  std::vector<Tensor3<S>> gskip(static_cast<std::size_t>(cfg.levels));
  for (int l = 0; l < cfg.levels; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    gskip[ul] = gx;
    const Tensor3<S> gup = conv_relu_backward(p, grads, lay.dec[ul], tp.dec[ul], gx, tp.emb);
    gx = upsample2_backward(gup);
  }
  for (int l = cfg.levels - 1; l >= 0; --l) {
    const auto ul = static_cast<std::size_t>(l);
    const auto& st = tp.enc[ul];
    Tensor3<S> gact = avgpool2_backward(gx, st.h, st.w);
    for (std::size_t i = 0; i < gact.v.size(); ++i) gact.v[i] += gskip[ul].v[i];
    gx = conv_relu_backward(p, grads, lay.enc[ul], st, gact, tp.emb);
  }
  if (grad_input) {
    *grad_input = Tensor3<S>(cfg.in_channels(), tp.F, tp.T);
    for (int c = 0; c < grad_input->c; ++c)
      for (int h = 0; h < tp.F; ++h)
        for (int w = 0; w < tp.T; ++w) (*grad_input)(c, h, w) = gx(c, h, w);
  }
}

/// Common interface of score estimators: s(x_t, y, t) with the shape of x_t.
using ScoreFn = std::function<ComplexSpectrogram(const ComplexSpectrogram&, const ComplexSpectrogram&, double)>;

/// Exact score of the perturbation kernel for a known clean x0.
struct AnalyticPointMassScore {
  ComplexSpectrogram x0;
  SdeConfig sde;

  ComplexSpectrogram operator()(const ComplexSpectrogram& x, const ComplexSpectrogram& y, double t) const {
    return kernel_score(x, x0, y, t, sde);
  }
};

/// Packs Re/Im planes of the listed spectrograms into a [2k, F, T] tensor.
template <class S>
Tensor3<S> pack_spectrograms(std::initializer_list<const ComplexSpectrogram*> specs) {
  const ComplexSpectrogram& first = **specs.begin();
  Tensor3<S> t(2 * static_cast<int>(specs.size()), first.bins, first.frames);
  int c = 0;
  for (const ComplexSpectrogram* s : specs) {
    require(s->same_shape(first), ErrorKind::Shape, "spectrogram shapes differ");
    for (int fr = 0; fr < s->frames; ++fr)
      for (int f = 0; f < s->bins; ++f) {
        const cfloat v = s->at(f, fr);
        t(c, f, fr) = static_cast<S>(v.real());
        t(c + 1, f, fr) = static_cast<S>(v.imag());
      }
    c += 2;
  }
  return t;
}

template <class S>
ComplexSpectrogram unpack_spectrogram(const Tensor3<S>& t, const ComplexSpectrogram& like) {
  ComplexSpectrogram out = like.zeros_like();
  for (int fr = 0; fr < like.frames; ++fr)
    for (int f = 0; f < like.bins; ++f)
      out.at(f, fr) = cfloat(static_cast<float>(t(0, f, fr)), static_cast<float>(t(1, f, fr)));
  return out;
}

/// Network input for a (x_t, y) pair under the configured mode.
template <class S>
Tensor3<S> network_input(const ScoreNetConfig& cfg, const ComplexSpectrogram& x, const ComplexSpectrogram& y) {
  if (cfg.conditioned()) return pack_spectrograms<S>({&x, &y});
  return pack_spectrograms<S>({&y});
}

/// Trained estimator: generative mode evaluates a score, discriminative mode
/// predicts the clean spectrogram from y alone.
template <class S = float>
struct ScoreNetwork {
  ScoreNetConfig cfg;
  SdeConfig sde;
  NetParams<S> params;

  ComplexSpectrogram evaluate(const ComplexSpectrogram& x, const ComplexSpectrogram& y, double t) const {
    require(x.same_shape(y), ErrorKind::Shape, "x and y shapes differ");
    const double sigma = cfg.conditioned() ? kernel_std(t, sde) : 1.0;
    const Tensor3<S> out = net_forward(params, cfg, network_input<S>(cfg, x, y), sigma);
    return unpack_spectrogram(out, x);
  }

  ScoreFn as_score_fn() const {
    return [this](const ComplexSpectrogram& x, const ComplexSpectrogram& y, double t) { return evaluate(x, y, t); };
  }
};

}  // namespace sde_restore
