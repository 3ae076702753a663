#include <catch2/catch_amalgamated.hpp>

#include "sde_restore/spectral.hpp"
#include "test_helpers.hpp"

using namespace sde_restore;
using Catch::Approx;

TEST_CASE("stft of silence is zero", "[spectral]") {
  Waveform w;
  w.samples.assign(2000, 0.0f);
  const ComplexSpectrogram S = stft(w);
  CHECK(S.bins == 257);
  CHECK(S.frames == 1 + (2000 - 510) / 128);
  for (const cfloat& v : S.data) CHECK(v == cfloat{});
}

TEST_CASE("stft of a DC signal puts sum(window) in bin 0", "[spectral]") {
  Waveform w;
  w.samples.assign(3000, 1.0f);
  const ComplexSpectrogram S = stft(w);
  double window_sum = 0;
  for (double v : hann_window(510)) window_sum += v;
  for (int t = 0; t < S.frames; ++t) {
    CHECK(std::abs(S.at(0, t).real() - window_sum) <= 1e-6 * window_sum);
    CHECK(std::abs(S.at(0, t).imag()) <= 1e-6 * window_sum);
  }
}

TEST_CASE("stft of a 1 kHz tone peaks at bin 32", "[spectral]") {
  const Waveform w = test_helpers::sine(1000.0, 0.5, 8000);
  const ComplexSpectrogram S = stft(w);
  for (int t = 1; t + 1 < S.frames; ++t) {
    int best = 0;
    for (int f = 1; f < S.bins; ++f)
      if (std::abs(S.at(f, t)) > std::abs(S.at(best, t))) best = f;
    CHECK(best == 32);
  }
}

TEST_CASE("stft rejects signals shorter than one window", "[spectral]") {
  Waveform w;
  w.samples.assign(509, 0.1f);
  try {
    stft(w);
    FAIL("expected size error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Size);
  }
}

TEST_CASE("hann window is symmetric and non-negative", "[spectral]") {
  const auto w = hann_window(510);
  for (std::size_t i = 0; i < w.size(); ++i) {
    CHECK(w[i] >= 0.0);
    CHECK(w[i] == Approx(w[w.size() - 1 - i]).margin(1e-15));
  }
}

TEST_CASE("istft inverts stft on interior samples", "[spectral]") {
  for (uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
    const Waveform x = test_helpers::white_noise(16000 + 37 * seed, seed, 0.2);
    const ComplexSpectrogram S = stft(x);
    const Waveform y = istft(S, StftConfig{}, x.size());
    REQUIRE(y.size() == x.size());
    CHECK(test_helpers::snr_db(x.samples, y.samples, 510, x.size() - 510) >= 50.0);
  }
}

TEST_CASE("istft of zeros is silent and keeps the requested length", "[spectral]") {
  ComplexSpectrogram S(257, 20);
  const Waveform y = istft(S, StftConfig{}, 4000);
  CHECK(y.size() == 4000);
  for (float v : y.samples) CHECK(v == 0.0f);
}

TEST_CASE("istft preserves the position of a centered impulse", "[spectral]") {
  Waveform x;
  x.samples.assign(8001, 0.0f);
  x.samples[4000] = 1.0f;
  const Waveform y = istft(stft(x), StftConfig{}, x.size());
  std::size_t peak = 0;
  for (std::size_t i = 0; i < y.size(); ++i)
    if (std::abs(y.samples[i]) > std::abs(y.samples[peak])) peak = i;
  CHECK(peak == 4000);
  CHECK(y.samples[4000] == Approx(1.0).margin(1e-4));
}

TEST_CASE("istft refuses compressed input", "[spectral]") {
  ComplexSpectrogram S(257, 4);
  S.compressed = true;
  try {
    istft(S, StftConfig{}, 1000);
    FAIL("expected state error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::State);
  }
}

TEST_CASE("compression maps magnitude to beta * sqrt(|X|)", "[spectral]") {
  ComplexSpectrogram S(2, 1);
  S.at(0, 0) = 4.0f;
  S.at(1, 0) = 0.0f;
  const ComplexSpectrogram c = compress(S);
  CHECK(c.compressed);
  CHECK(c.at(0, 0).real() == Approx(0.3).epsilon(1e-7));
  CHECK(c.at(0, 0).imag() == 0.0f);
  CHECK(c.at(1, 0) == cfloat{});
}

TEST_CASE("decompress inverts compress", "[spectral]") {
  Rng rng(11);
  ComplexSpectrogram S(257, 16);
  for (cfloat& v : S.data) v = cfloat(static_cast<float>(50 * rng.normal()), static_cast<float>(50 * rng.normal()));
  const ComplexSpectrogram back = decompress(compress(S));
  CHECK_FALSE(back.compressed);
  for (std::size_t i = 0; i < S.size(); ++i)
    CHECK(std::abs(back.data[i] - S.data[i]) <= 1e-6 * std::abs(S.data[i]) + 1e-30);
}

TEST_CASE("compression state is enforced", "[spectral]") {
  ComplexSpectrogram S(2, 2);
  const ComplexSpectrogram c = compress(S);
  CHECK_THROWS_AS(compress(c), Error);
  CHECK_THROWS_AS(decompress(S), Error);
}

TEST_CASE("normalize_pair divides by the corrupted peak", "[spectral]") {
  Waveform clean, corrupted;
  clean.samples = {0.1f, -0.05f};
  corrupted.samples = {0.4f, -0.2f};
  NormalizedPair p = normalize_pair(clean, corrupted);
  CHECK(p.norm_factor == Approx(0.4).epsilon(1e-7));
  CHECK(p.clean.samples[0] == Approx(0.25).epsilon(1e-6));

  corrupted.samples = {2.0f, -1.0f};
  p = normalize_pair(clean, corrupted);
  CHECK(p.norm_factor == 2.0);
  CHECK(p.corrupted.samples[0] == 1.0f);
  CHECK(p.clean.samples[0] == 0.05f);

  corrupted.samples = {1.0f, -0.5f};
  p = normalize_pair(clean, corrupted);
  CHECK(p.norm_factor == 1.0);
  CHECK(p.clean.samples == clean.samples);

  Waveform silent;
  silent.samples = {0.0f, 0.0f};
  try {
    normalize_pair(clean, silent);
    FAIL("expected degenerate input");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Degenerate);
  }
}

TEST_CASE("normalize_pair is invertible by the stored factor", "[spectral]") {
  const Waveform a = test_helpers::white_noise(1000, 1, 0.3);
  const Waveform b = test_helpers::white_noise(1000, 2, 0.7);
  const NormalizedPair p = normalize_pair(a, b);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(p.clean.samples[i] * p.norm_factor - a.samples[i]) <= 1e-7 * std::abs(a.samples[i]) + 1e-12);
    CHECK(std::abs(p.corrupted.samples[i] * p.norm_factor - b.samples[i]) <= 1e-7 * std::abs(b.samples[i]) + 1e-12);
  }
}

TEST_CASE("extract_patch crops, pads and reports its offset", "[spectral]") {
  Rng rng(5);
  ComplexSpectrogram S(3, 256);
  for (std::size_t i = 0; i < S.size(); ++i) S.data[i] = static_cast<float>(i);
  Patch p = extract_patch(S, 256, rng);
  CHECK(p.offset == 0);
  CHECK(p.spec.data == S.data);

  ComplexSpectrogram L(3, 300);
  for (std::size_t i = 0; i < L.size(); ++i) L.data[i] = static_cast<float>(i);
  Rng r1(42), r2(42);
  const Patch a = extract_patch(L, 256, r1);
  const Patch b = extract_patch(L, 256, r2);
  CHECK(a.offset == b.offset);
  CHECK(a.offset >= 0);
  CHECK(a.offset <= 44);
  CHECK(a.spec.at(0, 0) == L.at(0, a.offset));
  // The same offset reproduces the crop on a paired spectrogram.
  CHECK(crop_frames(L, a.offset, 256).data == a.spec.data);

  ComplexSpectrogram Sh(3, 100);
  for (cfloat& v : Sh.data) v = 1.0f;
  const Patch padded = extract_patch(Sh, 256, rng);
  CHECK(padded.offset == 0);
  CHECK(padded.spec.frames == 256);
  CHECK(padded.spec.at(2, 99) == 1.0f);
  CHECK(padded.spec.at(0, 100) == 0.0f);
  CHECK(padded.spec.at(2, 255) == 0.0f);
}

TEST_CASE("extract_patch offsets cover the admissible range", "[spectral]") {
  Rng rng(9);
  ComplexSpectrogram L(1, 300);
  int lo = 1000, hi = -1;
  for (int i = 0; i < 2000; ++i) {
    const int off = extract_patch(L, 256, rng).offset;
    lo = std::min(lo, off);
    hi = std::max(hi, off);
  }
  CHECK(lo == 0);
  CHECK(hi == 44);
}
