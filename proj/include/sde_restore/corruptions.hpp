// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sde_restore/error.hpp"
#include "sde_restore/fft.hpp"
#include "sde_restore/iir.hpp"
#include "sde_restore/random.hpp"
#include "sde_restore/room.hpp"
#include "sde_restore/signal_io.hpp"

namespace sde_restore {

enum class Task { Noise, Reverb, Bandwidth };

inline const char* to_string(Task t) {
  switch (t) {
    case Task::Noise: return "noise";
    case Task::Reverb: return "reverb";
    case Task::Bandwidth: return "bandwidth";
  }
  return "?";
}

inline Task task_from_string(const std::string& s) {
  if (s == "noise") return Task::Noise;
  if (s == "reverb") return Task::Reverb;
  if (s == "bandwidth") return Task::Bandwidth;
  fail(ErrorKind::Parameter, "unknown task '" + s + "' (expected noise, reverb or bandwidth)");
}

/// One corruption instance. Only the fields of `kind` are meaningful.
struct CorruptionSpec {
  Task kind = Task::Noise;
  double snr_db = 10.0;
  RoomSpec room;
  FilterFamily filter_family = FilterFamily::Butterworth;
  int filter_order = 4;
  int down_factor = 2;
  uint64_t seed = 0;
};

/// Sampling ranges of the three dataset recipes.
struct CorruptionRecipe {
  double snr_min_db = 0.0, snr_max_db = 20.0;
  double room_xy_min = 5.0, room_xy_max = 15.0;
  double room_z_min = 2.0, room_z_max = 6.0;
  double t60_min = 0.4, t60_max = 1.0;
  double wall_margin = 0.5;
  std::vector<FilterFamily> families{FilterFamily::Chebyshev1, FilterFamily::Butterworth, FilterFamily::Elliptic,
                                     FilterFamily::Bessel};
  std::vector<int> orders{2, 4, 8};
  std::vector<int> factors{2, 4, 8};
};

/// Draws a spec uniformly from the recipe; the result depends only on
/// (task, seed).
inline CorruptionSpec sample_spec(Task task, uint64_t seed, const CorruptionRecipe& recipe = {}) {
  Rng rng(seed);
  CorruptionSpec spec;
  spec.kind = task;
  spec.seed = seed;
  switch (task) {
    case Task::Noise:
      spec.snr_db = rng.uniform(recipe.snr_min_db, recipe.snr_max_db);
      break;
    case Task::Reverb: {
      RoomSpec& r = spec.room;
      r.length = rng.uniform(recipe.room_xy_min, recipe.room_xy_max);
      r.width = rng.uniform(recipe.room_xy_min, recipe.room_xy_max);
      r.height = rng.uniform(recipe.room_z_min, recipe.room_z_max);
      r.t60_target = rng.uniform(recipe.t60_min, recipe.t60_max);
      const Vec3 d = r.dims();
      for (int a = 0; a < 3; ++a) r.source[a] = rng.uniform(recipe.wall_margin, d[a] - recipe.wall_margin);
      for (int a = 0; a < 3; ++a) r.mic[a] = rng.uniform(recipe.wall_margin, d[a] - recipe.wall_margin);
      break;
    }
    case Task::Bandwidth:
      spec.filter_family = recipe.families[rng.uniform_index(recipe.families.size())];
      spec.filter_order = recipe.orders[rng.uniform_index(recipe.orders.size())];
      spec.down_factor = recipe.factors[rng.uniform_index(recipe.factors.size())];
      break;
  }
  return spec;
}

inline double mean_square(std::span<const float> x) {
  double acc = 0.0;
  for (float v : x) acc += static_cast<double>(v) * v;
  return x.empty() ? 0.0 : acc / static_cast<double>(x.size());
}

struct MixResult {
  Waveform mixture;
  Waveform scaled_noise;
  double gain = 1.0;       // applied to the noise crop
  std::size_t offset = 0;  // crop start within the noise signal
};

/// Additive mixture y = s + a*n at the requested SNR. The noise is cropped to
/// len(s) at a seeded random offset (tiled first if it is too short).
inline MixResult mix_at_snr(const Waveform& s, const Waveform& n, double snr_db, uint64_t seed = 0) {
  require(s.sample_rate_hz == n.sample_rate_hz, ErrorKind::Parameter, "speech and noise sample rates differ");
  require(!n.samples.empty(), ErrorKind::Degenerate, "noise signal is empty");
  const std::size_t len = s.size();
  std::vector<float> src = n.samples;
  while (src.size() < len) src.insert(src.end(), n.samples.begin(), n.samples.end());
  Rng rng(seed);
  MixResult r;
  r.offset = src.size() > len ? static_cast<std::size_t>(rng.uniform_index(src.size() - len + 1)) : 0;
  std::span<const float> crop(src.data() + r.offset, len);

  const double ps = mean_square(s.samples);
  const double pn = mean_square(crop);
  require(ps > 0, ErrorKind::Degenerate, "speech signal is silent");
  require(pn > 0, ErrorKind::Degenerate, "noise signal is silent");
  r.gain = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  r.scaled_noise.sample_rate_hz = s.sample_rate_hz;
  r.scaled_noise.samples.resize(len);
  r.mixture.sample_rate_hz = s.sample_rate_hz;
  r.mixture.samples.resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    r.scaled_noise.samples[i] = static_cast<float>(r.gain * crop[i]);
    r.mixture.samples[i] = static_cast<float>(static_cast<double>(s.samples[i]) + r.gain * crop[i]);
  }
  return r;
}

inline double realized_snr_db(const Waveform& s, const Waveform& noise) {
  return 10.0 * std::log10(mean_square(s.samples) / mean_square(noise.samples));
}

/// Linear convolution s * h, shifted left by `align` samples (default: the
/// peak of h, i.e. the direct path) and truncated to len(s).
inline Waveform apply_reverb(const Waveform& s, const Waveform& h, std::optional<std::size_t> align = std::nullopt) {
  require(s.sample_rate_hz == h.sample_rate_hz, ErrorKind::Parameter, "signal and RIR sample rates differ");
  Waveform out;
  out.sample_rate_hz = s.sample_rate_hz;
  out.samples.assign(s.size(), 0.0f);
  if (s.samples.empty() || h.samples.empty()) return out;
  const std::size_t shift = align.value_or(peak_index(h));
  std::vector<double> a(s.samples.begin(), s.samples.end());
  std::vector<double> b(h.samples.begin(), h.samples.end());
  const std::vector<double> y = fft_convolve(a, b);
  for (std::size_t i = 0; i < s.size() && i + shift < y.size(); ++i) out.samples[i] = static_cast<float>(y[i + shift]);
  return out;
}

/// Anti-aliasing cutoff as a fraction of the decimated Nyquist frequency.
inline constexpr double kBandwidthCutoffFraction = 0.9;

/// Lowpass (zero-phase), decimate by spec.down_factor, then polyphase
/// upsample back to the original rate. Output length equals input length.
inline Waveform bandwidth_reduce(const Waveform& s, const CorruptionSpec& spec, const LowpassSpec& lp = {}) {
  require(spec.kind == Task::Bandwidth, ErrorKind::Parameter, "spec is not a bandwidth corruption");
  require(spec.down_factor >= 1, ErrorKind::Parameter, "down-scaling factor must be positive");
  require(s.sample_rate_hz % spec.down_factor == 0, ErrorKind::Parameter,
          "sample rate " + std::to_string(s.sample_rate_hz) + " is not divisible by factor " +
              std::to_string(spec.down_factor));
  const double fs = s.sample_rate_hz;
  const double cutoff = kBandwidthCutoffFraction * fs / 2.0 / spec.down_factor;
  const SosFilter filter = design_lowpass(spec.filter_family, spec.filter_order, cutoff, fs, lp);
  const std::vector<double> x(s.samples.begin(), s.samples.end());
  const std::vector<double> filtered = filter.apply_zero_phase(x);

  Waveform low;
  low.sample_rate_hz = s.sample_rate_hz / spec.down_factor;
  for (std::size_t i = 0; i < filtered.size(); i += static_cast<std::size_t>(spec.down_factor))
    low.samples.push_back(static_cast<float>(filtered[i]));
  Waveform up = resample_polyphase(low, s.sample_rate_hz);
  up.samples.resize(s.size(), 0.0f);
  return up;
}

struct CorruptedPair {
  Waveform clean;      // training target
  Waveform corrupted;  // network input
  double absorption = 0.0;
};

/// Applies one corruption instance. For reverberation the target is the
/// same utterance through the dry room; both are aligned on the direct path.
inline CorruptedPair corrupt(const Waveform& s, const CorruptionSpec& spec, const Waveform* noise = nullptr) {
  CorruptedPair p;
  switch (spec.kind) {
    case Task::Noise: {
      require(noise != nullptr, ErrorKind::Parameter, "noise corruption needs a noise signal");
      p.clean = s;
      p.corrupted = mix_at_snr(s, *noise, spec.snr_db, spec.seed).mixture;
      break;
    }
    case Task::Reverb: {
      const RirResult wet = simulate_rir_detailed(spec.room, s.sample_rate_hz, false);
      const RirResult dry = simulate_rir_detailed(spec.room, s.sample_rate_hz, true);
      const std::size_t align =
          static_cast<std::size_t>(std::lround(direct_path_delay_samples(spec.room, s.sample_rate_hz)));
      p.clean = apply_reverb(s, dry.rir, align);
      p.corrupted = apply_reverb(s, wet.rir, align);
      p.absorption = wet.absorption;
      break;
    }
    case Task::Bandwidth:
      p.clean = s;
      p.corrupted = bandwidth_reduce(s, spec);
      break;
  }
  return p;
}

inline nlohmann::json to_json(const CorruptionSpec& spec) {
  nlohmann::json j;
  j["kind"] = to_string(spec.kind);
  j["seed"] = spec.seed;
  switch (spec.kind) {
    case Task::Noise:
      j["snr_db"] = spec.snr_db;
      break;
    case Task::Reverb: {
      const RoomSpec& r = spec.room;
      j["room"] = {{"length", r.length}, {"width", r.width}, {"height", r.height}, {"t60_target", r.t60_target},
                   {"source", r.source}, {"mic", r.mic}};
      break;
    }
    case Task::Bandwidth:
      j["filter_family"] = to_string(spec.filter_family);
      j["filter_order"] = spec.filter_order;
      j["down_factor"] = spec.down_factor;
      break;
  }
  return j;
}

inline CorruptionSpec corruption_spec_from_json(const nlohmann::json& j) {
  CorruptionSpec spec;
  spec.kind = task_from_string(j.at("kind").get<std::string>());
  spec.seed = j.value("seed", uint64_t{0});
  switch (spec.kind) {
    case Task::Noise:
      spec.snr_db = j.at("snr_db").get<double>();
      break;
    case Task::Reverb: {
      const auto& r = j.at("room");
      spec.room.length = r.at("length").get<double>();
      spec.room.width = r.at("width").get<double>();
      spec.room.height = r.at("height").get<double>();
      spec.room.t60_target = r.at("t60_target").get<double>();
      spec.room.source = r.at("source").get<Vec3>();
      spec.room.mic = r.at("mic").get<Vec3>();
      break;
    }
    case Task::Bandwidth:
      spec.filter_family = filter_family_from_string(j.at("filter_family").get<std::string>());
      spec.filter_order = j.at("filter_order").get<int>();
      spec.down_factor = j.at("down_factor").get<int>();
      break;
  }
  return spec;
}

}  // namespace sde_restore
