// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <numbers>
#include <vector>

#include "sde_restore/error.hpp"
#include "sde_restore/signal_io.hpp"

namespace sde_restore {

using Vec3 = std::array<double, 3>;

struct RoomSpec {
  double length = 8.0, width = 6.0, height = 3.0;  // meters
  double t60_target = 0.6;                         // seconds
  Vec3 source{2.0, 3.0, 1.5};
  Vec3 mic{5.0, 2.5, 1.5};

  Vec3 dims() const { return {length, width, height}; }
  double volume() const { return length * width * height; }
  double surface() const { return 2.0 * (length * width + length * height + width * height); }

  /// Source and microphone strictly inside, at least `margin` from each wall.
  bool positions_valid(double margin) const {
    const Vec3 d = dims();
    for (int a = 0; a < 3; ++a) {
      if (!(source[a] > margin && source[a] < d[a] - margin)) return false;
      if (!(mic[a] > margin && mic[a] < d[a] - margin)) return false;
    }
    return true;
  }
};

inline double distance(const Vec3& a, const Vec3& b) {
  return std::sqrt((a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1]) + (a[2] - b[2]) * (a[2] - b[2]));
}

struct RirOptions {
  double speed_of_sound = 343.0;
  int sinc_taps = 81;
  double residual_energy = 1e-4;  // truncate once the remaining image energy falls below this fraction
  int max_order = 400;
  double dry_absorption = 0.99;
  // Refine the Sabine estimate against the Schroeder-measured T60 of the
  // simulated response (the image method decays slower than Sabine predicts
  // in flat rooms).
  bool calibrate_t60 = true;
  int calibration_iterations = 8;
  double calibration_tolerance = 0.03;
};

/// Uniform wall absorption from Sabine's formula, a = 0.161 V / (T60 S).
inline double sabine_absorption(const RoomSpec& room) {
  require(room.t60_target > 0, ErrorKind::Parameter, "target T60 must be positive");
  const double a = 0.161 * room.volume() / (room.t60_target * room.surface());
  if (a >= 1.0)
    fail(ErrorKind::Infeasible, "room of volume " + std::to_string(room.volume()) + " m^3 cannot reach T60 " +
                                    std::to_string(room.t60_target) + " s (Sabine absorption >= 1)");
  return std::min(a, 0.99);
}

inline double direct_path_delay_samples(const RoomSpec& room, double fs, const RirOptions& opt = {}) {
  return distance(room.source, room.mic) * fs / opt.speed_of_sound;
}

/// Shoebox image-source impulse response for a given uniform wall
/// absorption. Images are enumerated by reflection order until the estimated
/// energy of all higher orders drops below `residual_energy` of the total.
inline Waveform image_source_rir(const RoomSpec& room, int fs, double absorption, const RirOptions& opt = {}) {
  require(fs > 0, ErrorKind::Parameter, "sample rate must be positive");
  require(room.length > 0 && room.width > 0 && room.height > 0, ErrorKind::Parameter, "room dimensions must be positive");
  require(room.positions_valid(0.0), ErrorKind::Parameter, "source and microphone must lie inside the room");
  require(absorption > 0 && absorption < 1, ErrorKind::Parameter, "absorption must lie in (0, 1)");
  const double beta = std::sqrt(1.0 - absorption);
  const Vec3 dim = room.dims();

  struct Image {
    double delay, amp;
  };
  std::vector<Image> images;
  double total = 0.0, prev_shell = 0.0;
  auto axis_pos = [&](int axis, int m) {
    // Index m: |m| reflections on this axis; even m mirrors translate, odd m flip.
    const double s = room.source[axis];
    return (m % 2 == 0) ? s + m * dim[axis] : -s + (m + 1) * dim[axis];
  };
  for (int order = 0; order <= opt.max_order; ++order) {
    double shell = 0.0;
    const double gain = std::pow(beta, order);
    for (int mx = -order; mx <= order; ++mx) {
      const int rem = order - std::abs(mx);
      for (int my = -rem; my <= rem; ++my) {
        const int mz_abs = rem - std::abs(my);
        for (int sign : {1, -1}) {
          if (mz_abs == 0 && sign < 0) break;
          const int mz = sign * mz_abs;
          const Vec3 img{axis_pos(0, mx), axis_pos(1, my), axis_pos(2, mz)};
          const double r = distance(img, room.mic);
          const double amp = gain / (4.0 * std::numbers::pi * std::max(r, 1e-3));
          images.push_back({r * fs / opt.speed_of_sound, amp});
          shell += amp * amp;
        }
      }
    }
    total += shell;
    if (order >= 2 && prev_shell > 0) {
      const double ratio = shell / prev_shell;
      if (ratio < 1.0 && shell * ratio / (1.0 - ratio) < opt.residual_energy * total) break;
    }
    prev_shell = shell;
  }

  double max_delay = 0.0;
  for (const Image& im : images) max_delay = std::max(max_delay, im.delay);
  const int half = opt.sinc_taps / 2;
  const std::size_t len = static_cast<std::size_t>(std::ceil(max_delay)) + half + 2;
  std::vector<double> h(len, 0.0);
  const double win_period = 2.0 * std::numbers::pi / (opt.sinc_taps + 1);
  for (const Image& im : images) {
    const long n0 = std::lround(im.delay);
    const double frac = im.delay - n0;  // in [-0.5, 0.5]
    // sin(pi (j - frac)) = -(-1)^j sin(pi frac); the Hann term is advanced by rotation.
    const double s = std::sin(std::numbers::pi * frac);
    std::complex<double> rot = std::polar(1.0, win_period);
    std::complex<double> w = std::polar(1.0, win_period * (-half - frac));
    for (int j = -half; j <= half; ++j, w *= rot) {
      const long idx = n0 + j;
      if (idx < 0 || idx >= static_cast<long>(len)) continue;
      const double x = j - frac;
      double sinc;
      if (std::abs(x) < 1e-12)
        sinc = 1.0;
      else
        sinc = -((j % 2 == 0) ? 1.0 : -1.0) * s / (std::numbers::pi * x);
      const double hann = 0.5 * (1.0 + w.real());
      h[static_cast<std::size_t>(idx)] += im.amp * sinc * hann;
    }
  }
  Waveform out;
  out.sample_rate_hz = fs;
  out.samples.assign(h.begin(), h.end());
  return out;
}

inline double schroeder_t60(const Waveform& h);

struct RirResult {
  Waveform rir;
  double absorption = 0.0;
};

/// Reverberant (dry = false) or near-anechoic (dry = true, fixed absorption)
/// response of the room. The reverberant absorption starts from the Sabine
/// inversion and, when calibration is enabled, is corrected so the measured
/// T60 matches the target: -ln(1 - a) is scaled by measured/target.
inline RirResult simulate_rir_detailed(const RoomSpec& room, int fs, bool dry, const RirOptions& opt = {}) {
  if (dry) return {image_source_rir(room, fs, opt.dry_absorption, opt), opt.dry_absorption};
  double absorption = sabine_absorption(room);
  Waveform h = image_source_rir(room, fs, absorption, opt);
  if (!opt.calibrate_t60) return {std::move(h), absorption};
  for (int it = 0; it < opt.calibration_iterations; ++it) {
    const double ratio = schroeder_t60(h) / room.t60_target;
    if (std::abs(ratio - 1.0) <= opt.calibration_tolerance) break;
    const double next = std::clamp(1.0 - std::exp(std::log1p(-absorption) * ratio), 1e-4, 0.99);
    if (next == absorption) break;
    absorption = next;
    h = image_source_rir(room, fs, absorption, opt);
  }
  return {std::move(h), absorption};
}

inline Waveform simulate_rir(const RoomSpec& room, int fs, bool dry, const RirOptions& opt = {}) {
  return simulate_rir_detailed(room, fs, dry, opt).rir;
}

/// Index of the largest-magnitude tap.
inline std::size_t peak_index(const Waveform& h) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < h.size(); ++i)
    if (std::abs(h.samples[i]) > std::abs(h.samples[best])) best = i;
  return best;
}

/// Reverberation time by Schroeder backward integration; a line is fitted to
/// the decay curve between -5 and -25 dB and extrapolated to -60 dB.
inline double schroeder_t60(const Waveform& h) {
  const std::size_t n = h.size();
  std::vector<double> edc(n + 1, 0.0);
  for (std::size_t i = n; i-- > 0;) edc[i] = edc[i + 1] + static_cast<double>(h.samples[i]) * h.samples[i];
  require(edc[0] > 0, ErrorKind::Degenerate, "impulse response is silent");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double db = 10.0 * std::log10(std::max(edc[i], 1e-300) / edc[0]);
    if (db > -5.0) continue;
    if (db < -25.0) break;
    const double t = static_cast<double>(i) / h.sample_rate_hz;
    sx += t;
    sy += db;
    sxx += t * t;
    sxy += t * db;
    ++count;
  }
  require(count >= 2, ErrorKind::Degenerate, "decay curve too short to fit");
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  return -60.0 / slope;
}

}  // namespace sde_restore
