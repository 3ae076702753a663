#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <map>

#include "sde_restore/corruptions.hpp"
#include "sde_restore/fft.hpp"
#include "test_helpers.hpp"

using namespace sde_restore;
using test_helpers::rms;
using test_helpers::sine;
using test_helpers::tone_amplitude;
using test_helpers::white_noise;

namespace {

Waveform constant_power(std::size_t n, double amp, uint64_t seed) {
  // +/- amp square wave in random order: mean square is exactly amp^2
  Rng rng(seed);
  Waveform w;
  w.samples.resize(n);
  for (float& v : w.samples) v = static_cast<float>(rng.uniform() < 0.5 ? -amp : amp);
  return w;
}

// Band power by direct DFT projection on a grid of frequencies.
double band_power(const std::vector<float>& x, double f_lo, double f_hi, int fs, std::size_t begin, std::size_t end) {
  std::size_t n = end - begin;
  std::size_t m = next_power_of_two(n);
  std::vector<std::complex<double>> buf(m);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (n - 1));
    buf[i] = x[begin + i] * w;
  }
  Fft fft(m);
  fft.forward(buf);
  double acc = 0;
  for (std::size_t k = 0; k <= m / 2; ++k) {
    const double f = static_cast<double>(k) * fs / m;
    if (f >= f_lo && f < f_hi) acc += std::norm(buf[k]);
  }
  return acc;
}

}  // namespace

TEST_CASE("mix_at_snr hits the requested SNR", "[corruptions]") {
  const Waveform s = white_noise(16000, 1, 0.3);
  const Waveform n = white_noise(40000, 2, 0.05);
  for (double snr : {0.0, 3.7, 10.0, 20.0, -5.0}) {
    const MixResult r = mix_at_snr(s, n, snr, 9);
    CHECK(std::abs(realized_snr_db(s, r.scaled_noise) - snr) < 1e-6);
    REQUIRE(r.mixture.size() == s.size());
    for (std::size_t i = 0; i < s.size(); i += 997)
      CHECK(r.mixture.samples[i] == Catch::Approx(s.samples[i] + r.scaled_noise.samples[i]).margin(1e-6));
  }
}

TEST_CASE("mix_at_snr gain examples", "[corruptions]") {
  const Waveform s = constant_power(8000, 1.0, 3);
  const Waveform n = constant_power(8000, 1.0, 4);
  CHECK(mix_at_snr(s, n, 0.0).gain == Catch::Approx(1.0).epsilon(1e-12));
  CHECK(mix_at_snr(s, n, 20.0).gain == Catch::Approx(0.1).epsilon(1e-12));

  const MixResult same = mix_at_snr(s, s, 0.0);
  for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(same.mixture.samples[i] == 2.0f * s.samples[i]);
}

TEST_CASE("mix_at_snr crop offset is seeded and silent inputs are rejected", "[corruptions]") {
  const Waveform s = white_noise(1000, 5);
  const Waveform n = white_noise(50000, 6);
  CHECK(mix_at_snr(s, n, 5.0, 77).offset == mix_at_snr(s, n, 5.0, 77).offset);
  CHECK(mix_at_snr(s, n, 5.0, 77).offset != mix_at_snr(s, n, 5.0, 78).offset);

  Waveform silent;
  silent.samples.assign(1000, 0.0f);
  try {
    mix_at_snr(s, silent, 0.0);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
  CHECK_THROWS_AS(mix_at_snr(silent, n, 0.0), Error);

  // a short noise signal is tiled to cover the utterance
  const Waveform shortn = white_noise(300, 8);
  const MixResult r = mix_at_snr(s, shortn, 0.0, 1);
  CHECK(r.mixture.size() == s.size());
}

TEST_CASE("apply_reverb identities", "[corruptions]") {
  const Waveform s = white_noise(4000, 11);
  Waveform h;
  h.samples = {1.0f};
  const Waveform y = apply_reverb(s, h);
  for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(y.samples[i] == Catch::Approx(s.samples[i]).margin(1e-6));

  Waveform hd;
  hd.samples.assign(64, 0.0f);
  hd.samples[37] = 0.5f;
  const Waveform y2 = apply_reverb(s, hd);
  REQUIRE(y2.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(y2.samples[i] == Catch::Approx(0.5 * s.samples[i]).margin(1e-6));
}

TEST_CASE("apply_reverb output power follows the RIR energy", "[corruptions]") {
  RoomSpec room;
  room.t60_target = 0.5;
  const Waveform h = simulate_rir(room, 16000, false);
  double eh = 0;
  for (float v : h.samples) eh += static_cast<double>(v) * v;
  const Waveform s = white_noise(16000 * 12, 13, 0.1);
  const Waveform y = apply_reverb(s, h, 0);
  // skip the first RIR length where the convolution has not filled up
  const std::size_t skip = h.size();
  const double py = std::pow(rms(y.samples, skip, y.size()), 2);
  const double ps = std::pow(rms(s.samples, 0, s.size()), 2);
  CHECK(py / (ps * eh) == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("reverb pairs are aligned on the direct path", "[corruptions]") {
  for (uint64_t seed : {21u, 22u, 23u}) {
    const CorruptionSpec spec = sample_spec(Task::Reverb, seed);
    const Waveform s = white_noise(16000, seed + 100);
    const CorruptedPair p = corrupt(s, spec);
    REQUIRE(p.clean.size() == s.size());
    REQUIRE(p.corrupted.size() == s.size());
    int best_lag = 0;
    double best = -1;
    for (int lag = -20; lag <= 20; ++lag) {
      double acc = 0;
      for (std::size_t i = 100; i + 100 < s.size(); ++i) acc += p.clean.samples[i] * p.corrupted.samples[i + lag];
      if (acc > best) best = acc, best_lag = lag;
    }
    CHECK(std::abs(best_lag) <= 2);
    // the dry target stays close to the source itself
    CHECK(test_helpers::snr_db(s.samples, p.clean.samples, 0, s.size()) > -12.0);
  }
}

TEST_CASE("bandwidth_reduce keeps passband tones and removes stopband tones", "[corruptions]") {
  const std::size_t n = 16000;
  CorruptionSpec spec;
  spec.kind = Task::Bandwidth;
  spec.down_factor = 2;
  for (FilterFamily fam : {FilterFamily::Butterworth, FilterFamily::Chebyshev1, FilterFamily::Elliptic}) {
    spec.filter_family = fam;
    spec.filter_order = 4;
    const Waveform pass = bandwidth_reduce(sine(2400.0, 0.5, n), spec);
    REQUIRE(pass.size() == n);
    const double loss_db = 20.0 * std::log10(tone_amplitude(pass.samples, 2400.0, 16000, 2000, n - 2000) / 0.5);
    INFO(to_string(fam));
    // forward-backward filtering squares the magnitude, so ripple families may dip by twice their ripple
    const double allowed = fam == FilterFamily::Butterworth ? 1.0 : 2.0 * LowpassSpec{}.passband_ripple_db + 0.1;
    CHECK(loss_db > -allowed);
    CHECK(loss_db < 0.1);
    const Waveform stop = bandwidth_reduce(sine(7500.0, 0.5, n), spec);
    const double att_db = 20.0 * std::log10(rms(stop.samples, 2000, n - 2000) / (0.5 / std::sqrt(2.0)));
    CHECK(att_db < -20.0);
  }
}

TEST_CASE("factor 8 leaves almost no energy above 1.2 kHz", "[corruptions]") {
  const Waveform s = white_noise(32000, 31, 0.2);
  CorruptionSpec spec;
  spec.kind = Task::Bandwidth;
  spec.down_factor = 8;
  for (FilterFamily fam : {FilterFamily::Butterworth, FilterFamily::Chebyshev1, FilterFamily::Elliptic,
                           FilterFamily::Bessel}) {
    for (int order : {4, 8}) {
      spec.filter_family = fam;
      spec.filter_order = order;
      const Waveform y = bandwidth_reduce(s, spec);
      const double pass = band_power(y.samples, 0.0, 600.0, 16000, 4000, 28000) / 600.0;
      const double high = band_power(y.samples, 1200.0, 8000.0, 16000, 4000, 28000) / 6800.0;
      INFO(to_string(fam) << " order " << order);
      CHECK(10.0 * std::log10(high / pass) < -30.0);
    }
  }
}

TEST_CASE("bandlimited input survives the round trip", "[corruptions]") {
  for (int factor : {2, 4, 8}) {
    // bandlimited noise: zero-phase filtered far below the new Nyquist
    const double edge = 16000.0 / (2.0 * factor) * 0.8;
    const SosFilter lp = design_lowpass(FilterFamily::Butterworth, 8, edge * 0.7, 16000.0);
    const Waveform raw = white_noise(24000, 40 + factor, 0.2);
    const std::vector<double> xd(raw.samples.begin(), raw.samples.end());
    const std::vector<double> bl = lp.apply_zero_phase(lp.apply_zero_phase(xd));
    Waveform s;
    s.samples.assign(bl.begin(), bl.end());
    CorruptionSpec spec;
    spec.kind = Task::Bandwidth;
    spec.down_factor = factor;
    spec.filter_family = FilterFamily::Butterworth;
    spec.filter_order = 8;
    const Waveform y = bandwidth_reduce(s, spec);
    INFO("factor " << factor);
    CHECK(test_helpers::snr_db(s.samples, y.samples, 2000, s.size() - 2000) >= 30.0);
  }
}

TEST_CASE("bandwidth_reduce rejects indivisible rates", "[corruptions]") {
  CorruptionSpec spec;
  spec.kind = Task::Bandwidth;
  spec.down_factor = 8;
  Waveform s = white_noise(1000, 1, 0.1, 22050);
  CHECK_THROWS_AS(bandwidth_reduce(s, spec), Error);
}

TEST_CASE("sample_spec is deterministic and within ranges", "[corruptions]") {
  for (Task t : {Task::Noise, Task::Reverb, Task::Bandwidth}) {
    CHECK(to_json(sample_spec(t, 1234)) == to_json(sample_spec(t, 1234)));
  }
  for (uint64_t seed = 0; seed < 500; ++seed) {
    const CorruptionSpec r = sample_spec(Task::Reverb, seed);
    REQUIRE(r.room.length >= 5.0);
    REQUIRE(r.room.length <= 15.0);
    REQUIRE(r.room.height >= 2.0);
    REQUIRE(r.room.height <= 6.0);
    REQUIRE(r.room.t60_target >= 0.4);
    REQUIRE(r.room.t60_target <= 1.0);
    REQUIRE(r.room.positions_valid(0.5));
  }
}

TEST_CASE("noise SNR draws average to the midpoint", "[corruptions]") {
  double sum = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const double v = sample_spec(Task::Noise, derive_seed(99, i)).snr_db;
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 20.0);
    sum += v;
  }
  CHECK(std::abs(sum / n - 10.0) < 0.5);
}

TEST_CASE("bandwidth recipe cells are uniform", "[corruptions]") {
  std::map<std::array<int, 3>, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const CorruptionSpec s = sample_spec(Task::Bandwidth, derive_seed(7, i));
    counts[{static_cast<int>(s.filter_family), s.filter_order, s.down_factor}]++;
  }
  REQUIRE(counts.size() == 36);
  const double p = 1.0 / 36.0;
  const double expected = n * p;
  const double sigma = std::sqrt(n * p * (1 - p));
  double chi2 = 0;
  for (const auto& [cell, c] : counts) {
    CHECK(std::abs(c - expected) < 4 * sigma);
    chi2 += (c - expected) * (c - expected) / expected;
  }
  // 35 degrees of freedom, 99.9% quantile is about 66.6
  CHECK(chi2 < 66.6);
}

TEST_CASE("spec JSON round trip", "[corruptions]") {
  for (Task t : {Task::Noise, Task::Reverb, Task::Bandwidth}) {
    const CorruptionSpec a = sample_spec(t, 55);
    const CorruptionSpec b = corruption_spec_from_json(to_json(a));
    CHECK(to_json(a) == to_json(b));
  }
}

TEST_CASE("same seed gives identical corrupted output", "[corruptions]") {
  const Waveform s = white_noise(8000, 71);
  const Waveform noise = white_noise(20000, 72);
  for (Task t : {Task::Noise, Task::Reverb, Task::Bandwidth}) {
    const CorruptionSpec spec = sample_spec(t, 314);
    const CorruptedPair a = corrupt(s, spec, &noise);
    const CorruptedPair b = corrupt(s, spec, &noise);
    CHECK(a.corrupted.samples == b.corrupted.samples);
    CHECK(a.clean.samples == b.clean.samples);
  }
}
