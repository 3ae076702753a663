// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "sde_restore/error.hpp"
#include "sde_restore/manifest.hpp"
#include "sde_restore/parallel.hpp"
#include "sde_restore/signal_io.hpp"
#include "sde_restore/spectral.hpp"

namespace sde_restore {

inline constexpr double kSiSdrCapDb = 100.0;
inline constexpr double kLsdPowerFloor = 1e-8;

/// Scale-invariant SDR in dB, capped at kSiSdrCapDb for (near) exact estimates.
inline double si_sdr(const Waveform& reference, const Waveform& estimate) {
  require(reference.size() == estimate.size() && !reference.samples.empty(), ErrorKind::Shape,
          "si_sdr needs equal, non-zero lengths");
  double rr = 0.0, er = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    rr += double(reference.samples[i]) * reference.samples[i];
    er += double(estimate.samples[i]) * reference.samples[i];
  }
  require(rr > 0, ErrorKind::Degenerate, "si_sdr reference is silent");
  const double alpha = er / rr;
  double tt = 0.0, ee = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double target = alpha * reference.samples[i];
    const double e = estimate.samples[i] - target;
    tt += target * target;
    ee += e * e;
  }
  if (ee < 1e-12 * tt) return kSiSdrCapDb;
  if (tt == 0.0) return -kSiSdrCapDb;  // estimate orthogonal to the reference
  return std::min(kSiSdrCapDb, 10.0 * std::log10(tt / ee));
}

/// Mean over frames of the RMS (over bins) difference of log10 power spectra.
inline double lsd(const Waveform& reference, const Waveform& estimate, const StftConfig& cfg = {}) {
  require(reference.size() == estimate.size(), ErrorKind::Shape, "lsd needs equal lengths");
  require(peak_abs(reference) > 0 && peak_abs(estimate) > 0, ErrorKind::Degenerate, "lsd input is silent");
  const ComplexSpectrogram R = stft(reference, cfg), E = stft(estimate, cfg);
  double total = 0.0;
  for (int t = 0; t < R.frames; ++t) {
    double acc = 0.0;
    for (int f = 0; f < R.bins; ++f) {
      const double pr = std::max(kLsdPowerFloor, double(std::norm(std::complex<double>(R.at(f, t)))));
      const double pe = std::max(kLsdPowerFloor, double(std::norm(std::complex<double>(E.at(f, t)))));
      const double d = std::log10(pr) - std::log10(pe);
      acc += d * d;
    }
    total += std::sqrt(acc / R.bins);
  }
  return total / R.frames;
}

struct MetricRow {
  std::string id;
  std::string task;
  double si_sdr_db = 0.0;
  double lsd = 0.0;
  double input_si_sdr_db = 0.0;
  double input_lsd = 0.0;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) return {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

struct MetricReport {
  std::vector<MetricRow> rows;
  std::vector<std::string> skipped;  // one message per skipped manifest row

  MeanStd aggregate(double MetricRow::*field) const {
    std::vector<double> v;
    v.reserve(rows.size());
    for (const auto& r : rows) v.push_back(r.*field);
    return mean_std(v);
  }
};

inline void write_metric_csv(const std::filesystem::path& path, const MetricReport& rep) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << "id,task,si_sdr_db,lsd,input_si_sdr_db,input_lsd\n";
  out.precision(17);
  for (const auto& r : rep.rows)
    out << r.id << "," << r.task << "," << r.si_sdr_db << "," << r.lsd << "," << r.input_si_sdr_db << "," << r.input_lsd
        << "\n";
}

/// Scores `restored_dir/<corrupted file name>` against each row's clean file,
/// alongside the unprocessed corrupted input. Rows with missing or unreadable
/// files are skipped and listed in `skipped`.
inline MetricReport evaluate_manifest(const Manifest& manifest, const std::filesystem::path& restored_dir,
                                      const StftConfig& cfg = {}, unsigned jobs = 1) {
  const std::size_t n = manifest.rows.size();
  std::vector<MetricRow> rows(n);
  std::vector<std::string> errors(n);
  parallel_for(n, jobs, [&](std::size_t i) {
    const ManifestRow& m = manifest.rows[i];
    const std::filesystem::path restored = restored_dir / std::filesystem::path(m.corrupted).filename();
    try {
      for (const auto& p : {manifest.resolve(m.clean), manifest.resolve(m.corrupted), restored})
        require(std::filesystem::exists(p), ErrorKind::Io, "missing " + p.string());
      const Waveform clean = read_wav(manifest.resolve(m.clean));
      const Waveform corrupted = read_wav(manifest.resolve(m.corrupted));
      const Waveform est = read_wav(restored);
      rows[i] = {m.id(), to_string(m.task), si_sdr(clean, est), lsd(clean, est, cfg), si_sdr(clean, corrupted),
                 lsd(clean, corrupted, cfg)};
    } catch (const Error& e) {
      errors[i] = m.id() + ": " + e.what();
    }
  });
  MetricReport rep;
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i].empty())
      rep.rows.push_back(std::move(rows[i]));
    else
      rep.skipped.push_back(std::move(errors[i]));
  }
  return rep;
}

}  // namespace sde_restore
