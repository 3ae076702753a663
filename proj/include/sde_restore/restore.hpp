// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <utility>
#include <vector>

#include "sde_restore/checkpoint.hpp"
#include "sde_restore/error.hpp"
#include "sde_restore/random.hpp"
#include "sde_restore/sampler.hpp"
#include "sde_restore/signal_io.hpp"
#include "sde_restore/spectral.hpp"

namespace sde_restore {

/// Zero padding (front, back) that gives every sample of a length-n signal
/// full overlap-add support: win_len - hop in front, the same plus the
/// remainder of the last partial hop behind.
inline std::pair<std::size_t, std::size_t> analysis_padding(std::size_t n, const StftConfig& cfg) {
  const std::size_t front = static_cast<std::size_t>(cfg.win_len - cfg.hop);
  const std::size_t hop = static_cast<std::size_t>(cfg.hop);
  const std::size_t body = n + 2 * front;
  const std::size_t extra = body < static_cast<std::size_t>(cfg.win_len) ? cfg.win_len - body
                                                                         : (hop - (body - cfg.win_len) % hop) % hop;
  return {front, front + extra};
}

/// Waveform-to-waveform restoration with a trained checkpoint. Generative
/// checkpoints run the reverse sampler; discriminative ones one forward pass.
inline Waveform restore(const Waveform& w, const Checkpoint& ck, const SamplerConfig& scfg, Rng& rng,
                        std::vector<TraceRow>* trace = nullptr) {
  const RunConfig& cfg = ck.config;
  require(w.sample_rate_hz == cfg.sample_rate_hz, ErrorKind::Config,
          "input is " + std::to_string(w.sample_rate_hz) + " Hz but the checkpoint expects " +
              std::to_string(cfg.sample_rate_hz) + " Hz");
  const double factor = peak_abs(w);
  require(factor > 0, ErrorKind::Degenerate, "input signal is silent");
  const auto [front, back] = analysis_padding(w.size(), cfg.stft);
  Waveform padded = scale_waveform(w, 1.0 / factor);
  padded.samples.insert(padded.samples.begin(), front, 0.0f);
  padded.samples.insert(padded.samples.end(), back, 0.0f);
  const ComplexSpectrogram y = compress(stft(padded, cfg.stft), cfg.stft.compression_scale);
  const ScoreNetwork<float> net = ck.network();
  ComplexSpectrogram x0;
  if (cfg.net.conditioned())
    x0 = sample(y, net.as_score_fn(), cfg.sde, scfg, rng, trace);
  else
    x0 = net.evaluate(y, y, cfg.sde.t_eps);
  x0.compressed = true;
  Waveform out = istft(decompress(x0, cfg.stft.compression_scale), cfg.stft, padded.size(), w.sample_rate_hz);
  out.samples.erase(out.samples.begin(), out.samples.begin() + static_cast<std::ptrdiff_t>(front));
  out.samples.resize(w.size());
  return scale_waveform(out, factor);
}

}  // namespace sde_restore
