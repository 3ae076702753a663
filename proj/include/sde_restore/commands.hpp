// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

// Library side of the sde-restore command-line tool. Each command reads and
// writes files only, so the CLI binary is a thin flag parser over these.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sde_restore/checkpoint.hpp"
#include "sde_restore/config.hpp"
#include "sde_restore/corruptions.hpp"
#include "sde_restore/manifest.hpp"
#include "sde_restore/metrics.hpp"
#include "sde_restore/parallel.hpp"
#include "sde_restore/restore.hpp"
#include "sde_restore/sde.hpp"
#include "sde_restore/training.hpp"

namespace sde_restore {

namespace fs = std::filesystem;

/// Sorted list of *.wav files directly inside `dir` (or `dir` itself if it is
/// a file).
inline std::vector<fs::path> list_wavs(const fs::path& dir) {
  require(fs::exists(dir), ErrorKind::Io, "no such file or directory: " + dir.string());
  if (fs::is_regular_file(dir)) return {dir};
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (e.is_regular_file() && ext == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// FNV-1a of a file name, used to give each input its own RNG stream
/// independent of directory order.
inline uint64_t name_hash(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ull;
  return h;
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------- generate

struct GenerateOptions {
  Task task = Task::Noise;
  fs::path clean_dir;
  fs::path noise_dir;  // required for the noise task
  fs::path out_dir;
  int count = 0;
  uint64_t seed = 0;
  unsigned jobs = 1;
  int max_tries = 100;  // spec redraws for infeasible rooms
};

inline nlohmann::json to_json(const GenerateOptions& o) {
  return {{"task", to_string(o.task)}, {"clean_dir", o.clean_dir.string()}, {"noise_dir", o.noise_dir.string()},
          {"out_dir", o.out_dir.string()}, {"count", o.count}, {"seed", o.seed}};
}

inline std::string utterance_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "utt%05d", i);
  return buf;
}

/// Writes `count` corrupted/clean pairs and `manifest.jsonl` into out_dir.
/// Utterance i uses clean file i mod n; noise files are drawn per utterance.
inline Manifest cmd_generate(const GenerateOptions& o) {
  require(o.count >= 0, ErrorKind::Parameter, "count must be non-negative");
  fs::create_directories(o.out_dir);
  std::vector<fs::path> cleans, noises;
  if (o.count > 0) {
    cleans = list_wavs(o.clean_dir);
    require(!cleans.empty(), ErrorKind::Io, "no WAV files in " + o.clean_dir.string());
    if (o.task == Task::Noise) {
      require(!o.noise_dir.empty(), ErrorKind::Parameter, "the noise task needs --noise-dir");
      noises = list_wavs(o.noise_dir);
      require(!noises.empty(), ErrorKind::Io, "no WAV files in " + o.noise_dir.string());
    }
  }
  std::vector<ManifestRow> rows(static_cast<std::size_t>(o.count));
  parallel_for(rows.size(), o.jobs, [&](std::size_t i) {
    const uint64_t useed = derive_seed(o.seed, i);
    const Waveform s = read_wav(cleans[i % cleans.size()]);
    std::optional<Waveform> noise;
    if (o.task == Task::Noise) {
      Rng pick(derive_seed(useed, 1));
      noise = read_wav(noises[pick.uniform_index(noises.size())]);
    }
    CorruptionSpec spec;
    CorruptedPair pair;
    for (int attempt = 0;; ++attempt) {
      spec = sample_spec(o.task, derive_seed(useed, 100 + static_cast<uint64_t>(attempt)));
      try {
        pair = corrupt(s, spec, noise ? &*noise : nullptr);
        break;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Infeasible || attempt + 1 >= o.max_tries) throw;
      }
    }
    const std::string name = utterance_name(static_cast<int>(i));
    write_wav(o.out_dir / (name + ".wav"), pair.corrupted);
    write_wav(o.out_dir / (name + "_clean.wav"), pair.clean);
    rows[i] = {name + "_clean.wav", name + ".wav", o.task, spec, useed};
  });
  write_manifest(o.out_dir / "manifest.jsonl", rows);
  write_json_file(o.out_dir / "generate.json", to_json(o));
  return {o.out_dir, rows};
}

// ------------------------------------------------------------------- train

struct TrainOptions {
  fs::path manifest;
  fs::path checkpoint;
  RunConfig config;
  unsigned jobs = 1;
};

inline fs::path sibling(const fs::path& p, const std::string& suffix) {
  return p.parent_path() / (p.stem().string() + suffix);
}

/// Trains and writes the checkpoint plus `<stem>.curve.csv` and
/// `<stem>.config.json` next to it.
inline TrainResult cmd_train(const TrainOptions& o, std::ostream& log) {
  RunConfig cfg = o.config;
  cfg.train.seed = cfg.seed;
  cfg.train.jobs = o.jobs;
  cfg.validate();
  require(fs::exists(o.manifest), ErrorKind::Io, "manifest not found: " + o.manifest.string());
  const Manifest m = read_manifest(o.manifest);
  require(!m.rows.empty(), ErrorKind::Parameter, "manifest is empty: " + o.manifest.string());
  const std::vector<TrainExample> data = load_examples(m, cfg.stft, cfg.sample_rate_hz, o.jobs);
  log << "training " << to_string(cfg.net.mode) << " model on " << data.size() << " utterances\n";
  const TrainResult r = train(data, cfg.net, cfg.train, cfg.sde, [&](const CurveRow& row) {
    log << "epoch " << row.epoch << " train " << row.train_loss << " val " << row.val_loss << "\n";
  });
  if (!o.checkpoint.parent_path().empty()) fs::create_directories(o.checkpoint.parent_path());
  write_checkpoint(o.checkpoint, {cfg, r.params, r.ema, r.best_epoch, r.best_val_loss, r.steps});
  write_curve_csv(sibling(o.checkpoint, ".curve.csv"), r.curve);
  write_run_config(sibling(o.checkpoint, ".config.json"), cfg);
  log << "best epoch " << r.best_epoch << " (val " << r.best_val_loss << "), " << r.steps << " steps"
      << (r.early_stopped ? ", stopped early" : "") << "\n";
  return r;
}

// ----------------------------------------------------------------- enhance

struct EnhanceOptions {
  fs::path input;  // WAV file or directory
  fs::path checkpoint;
  fs::path out_dir;
  SamplerConfig sampler;
  uint64_t seed = 0;
  unsigned jobs = 1;
  bool trace = false;  // per-file <name>.trace.csv
};

inline nlohmann::json to_json(const EnhanceOptions& o) {
  return {{"input", o.input.string()},
          {"checkpoint", o.checkpoint.string()},
          {"out_dir", o.out_dir.string()},
          {"sampler",
           {{"n_steps", o.sampler.n_steps}, {"corrector_steps", o.sampler.corrector_steps}, {"snr_r", o.sampler.snr_r},
            {"scheme", to_string(o.sampler.scheme)}}},
          {"seed", o.seed}};
}

/// Restores every input into out_dir under the same file name. Returns the
/// number of files written.
inline std::size_t cmd_enhance(const EnhanceOptions& o, std::ostream& log) {
  o.sampler.validate();
  const Checkpoint ck = read_checkpoint(o.checkpoint);
  const std::vector<fs::path> inputs = list_wavs(o.input);
  fs::create_directories(o.out_dir);
  log << "enhancing " << inputs.size() << " file(s) with a " << to_string(ck.config.net.mode) << " model\n";
  parallel_for(inputs.size(), o.jobs, [&](std::size_t i) {
    const std::string name = inputs[i].filename().string();
    const Waveform w = read_wav(inputs[i]);
    Rng rng(derive_seed(o.seed, name_hash(name)));
    std::vector<TraceRow> trace;
    const Waveform out = restore(w, ck, o.sampler, rng, o.trace ? &trace : nullptr);
    write_wav(o.out_dir / name, out);
    if (o.trace && ck.config.net.conditioned()) write_trace_csv((o.out_dir / (inputs[i].stem().string() + ".trace.csv")).string(), trace);
  });
  write_json_file(o.out_dir / "enhance.json", to_json(o));
  return inputs.size();
}

// ---------------------------------------------------------------- evaluate

struct EvaluateOptions {
  fs::path manifest;
  std::vector<std::pair<std::string, fs::path>> restored;  // (label, dir)
  fs::path out_csv;
  StftConfig stft;
  unsigned jobs = 1;
};

struct EvaluateResult {
  std::vector<std::pair<std::string, MetricReport>> reports;
  std::size_t skipped = 0;
};

/// Per-method CSV path: out_csv itself for a single method, otherwise
/// `<stem>.<label>.csv`.
inline fs::path method_csv(const EvaluateOptions& o, const std::string& label) {
  if (o.restored.size() == 1) return o.out_csv;
  return sibling(o.out_csv, "." + label + ".csv");
}

inline std::string format_table(const std::vector<std::pair<std::string, MeanStd>>& si,
                                const std::vector<std::pair<std::string, MeanStd>>& ls, const std::vector<std::size_t>& ns) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2);
  s << std::left << std::setw(16) << "method" << std::setw(20) << "SI-SDR [dB]" << std::setw(16) << "LSD" << "n\n";
  for (std::size_t i = 0; i < si.size(); ++i) {
    std::ostringstream a, b;
    a << std::fixed << std::setprecision(2) << si[i].second.mean << " +- " << si[i].second.std;
    b << std::fixed << std::setprecision(3) << ls[i].second.mean << " +- " << ls[i].second.std;
    s << std::setw(16) << si[i].first << std::setw(20) << a.str() << std::setw(16) << b.str() << ns[i] << "\n";
  }
  return s.str();
}

/// Scores each restored directory, writes per-row CSVs and
/// `<stem>.summary.csv` (method, n, si_sdr_mean, si_sdr_std, lsd_mean,
/// lsd_std), and prints a Mixture/methods table. The Mixture row comes from
/// the first method's rows.
inline EvaluateResult cmd_evaluate(const EvaluateOptions& o, std::ostream& out, std::ostream& log) {
  require(!o.restored.empty(), ErrorKind::Parameter, "at least one restored directory is needed");
  require(fs::exists(o.manifest), ErrorKind::Io, "manifest not found: " + o.manifest.string());
  const Manifest m = read_manifest(o.manifest);
  EvaluateResult res;
  for (const auto& [label, dir] : o.restored) {
    MetricReport rep = evaluate_manifest(m, dir, o.stft, o.jobs);
    for (const auto& s : rep.skipped) log << "warning: [" << label << "] skipped " << s << "\n";
    res.skipped += rep.skipped.size();
    if (!o.out_csv.parent_path().empty()) fs::create_directories(o.out_csv.parent_path());
    write_metric_csv(method_csv(o, label), rep);
    res.reports.emplace_back(label, std::move(rep));
  }
  std::vector<std::pair<std::string, MeanStd>> si, ls;
  std::vector<std::size_t> ns;
  const MetricReport& first = res.reports.front().second;
  si.emplace_back("Mixture", first.aggregate(&MetricRow::input_si_sdr_db));
  ls.emplace_back("Mixture", first.aggregate(&MetricRow::input_lsd));
  ns.push_back(first.rows.size());
  for (const auto& [label, rep] : res.reports) {
    si.emplace_back(label, rep.aggregate(&MetricRow::si_sdr_db));
    ls.emplace_back(label, rep.aggregate(&MetricRow::lsd));
    ns.push_back(rep.rows.size());
  }
  std::ofstream sum(sibling(o.out_csv, ".summary.csv"), std::ios::binary);
  require(static_cast<bool>(sum), ErrorKind::Io, "cannot write the summary CSV");
  sum << "method,n,si_sdr_mean,si_sdr_std,lsd_mean,lsd_std\n";
  sum.precision(17);
  for (std::size_t i = 0; i < si.size(); ++i)
    sum << si[i].first << "," << ns[i] << "," << si[i].second.mean << "," << si[i].second.std << "," << ls[i].second.mean
        << "," << ls[i].second.std << "\n";
  out << format_table(si, ls, ns);
  if (res.skipped > 0) log << "warning: " << res.skipped << " row(s) skipped\n";
  return res;
}

// ----------------------------------------------------------------- sde-sim

struct SdeSimOptions {
  SdeConfig sde;
  int n_paths = 10000;
  int n_steps = 1000;
  int trace_paths = 8;  // trajectories written for the tracked bin
  fs::path out_csv;     // summary; trajectories go to <stem>.paths.csv
  uint64_t seed = 0;
  double tolerance = 0.05;  // relative, on the std at every checked time
};

struct SdeSimResult {
  bool pass = false;
  double std_t1 = 0.0;
};

/// Integrates the forward SDE for one bin with x0 = 1, y = 0, so the
/// empirical mean estimates exp(-gamma t) directly.
inline SdeSimResult cmd_sde_sim(const SdeSimOptions& o, std::ostream& out) {
  o.sde.validate();
  require(o.n_paths >= 1 && o.n_steps >= 1, ErrorKind::Parameter, "n_paths and n_steps must be positive");
  const std::size_t rows = static_cast<std::size_t>(o.n_steps) + 1;
  std::vector<cdouble> sum(rows);
  std::vector<double> sq(rows);
  const int tp = std::min(o.trace_paths, o.n_paths);
  std::vector<std::vector<cdouble>> traces(static_cast<std::size_t>(tp), std::vector<cdouble>(rows));
  const std::vector<cdouble> x0{1.0}, y{0.0};
  for (int p = 0; p < o.n_paths; ++p) {
    Rng rng(derive_seed(o.seed, static_cast<uint64_t>(p)));
    simulate_forward_visit(x0, y, o.sde, o.n_steps, rng, [&](int k, double, const std::vector<cdouble>& x) {
      const auto kk = static_cast<std::size_t>(k);
      sum[kk] += x[0];
      if (p < tp) traces[static_cast<std::size_t>(p)][kk] = x[0];
    });
  }
  const double n = o.n_paths;
  // second pass over the same streams for a two-pass variance
  std::vector<cdouble> mean(rows);
  for (std::size_t k = 0; k < rows; ++k) mean[k] = sum[k] / n;
  for (int p = 0; p < o.n_paths; ++p) {
    Rng rng(derive_seed(o.seed, static_cast<uint64_t>(p)));
    simulate_forward_visit(x0, y, o.sde, o.n_steps, rng, [&](int k, double, const std::vector<cdouble>& x) {
      sq[static_cast<std::size_t>(k)] += std::norm(x[0] - mean[static_cast<std::size_t>(k)]);
    });
  }
  if (!o.out_csv.parent_path().empty()) fs::create_directories(o.out_csv.parent_path());
  std::ofstream s(o.out_csv, std::ios::binary);
  require(static_cast<bool>(s), ErrorKind::Io, "cannot write " + o.out_csv.string());
  s << "t,mean_weight,sigma,empirical_mean,empirical_std\n";
  s.precision(12);
  std::ofstream tr(sibling(o.out_csv, ".paths.csv"), std::ios::binary);
  require(static_cast<bool>(tr), ErrorKind::Io, "cannot write the trajectory CSV");
  tr << "t";
  for (int p = 0; p < tp; ++p) tr << ",re_" << p << ",im_" << p;
  tr << "\n";
  tr.precision(12);

  SdeSimResult res;
  res.pass = true;
  const double dt = o.sde.t_max / o.n_steps;
  for (std::size_t k = 0; k < rows; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double emp_std = o.n_paths > 1 ? std::sqrt(sq[k] / (n - 1)) : 0.0;
    s << t << "," << mean_weight(t, o.sde) << "," << kernel_std(t, o.sde) << "," << mean[k].real() << "," << emp_std
      << "\n";
    tr << t;
    for (int p = 0; p < tp; ++p) tr << "," << traces[static_cast<std::size_t>(p)][k].real() << "," << traces[static_cast<std::size_t>(p)][k].imag();
    tr << "\n";
  }
  out << std::fixed << std::setprecision(5);
  for (double tc : {0.25, 0.5, 1.0}) {
    if (tc > o.sde.t_max) continue;
    const auto k = static_cast<std::size_t>(std::lround(tc / dt));
    const double t = static_cast<double>(k) * dt;
    const double sigma = kernel_std(t, o.sde);
    const double emp_std = o.n_paths > 1 ? std::sqrt(sq[k] / (n - 1)) : 0.0;
    const double sem = sigma / std::sqrt(2.0 * n);  // per real component
    const bool mean_ok = std::abs(mean[k].real() - mean_weight(t, o.sde)) <= 3 * sem && std::abs(mean[k].imag()) <= 3 * sem;
    const bool std_ok = std::abs(emp_std - sigma) <= o.tolerance * sigma;
    res.pass = res.pass && mean_ok && std_ok;
    if (tc == 1.0) res.std_t1 = emp_std;
    out << "t=" << t << " mean " << mean[k].real() << " (analytic " << mean_weight(t, o.sde) << ") std " << emp_std
        << " (analytic " << sigma << ")\n";
  }
  out << (res.pass ? "PASS" : "FAIL") << " kernel consistency (" << o.n_paths << " paths, " << o.n_steps << " steps)\n";
  return res;
}

}  // namespace sde_restore
