// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <json.hpp>

#include "sde_restore/error.hpp"
#include "sde_restore/sampler.hpp"
#include "sde_restore/score_net.hpp"
#include "sde_restore/sde.hpp"
#include "sde_restore/spectral.hpp"
#include "sde_restore/training.hpp"

namespace sde_restore {

/// Every module config plus the master seed and sample rate. The master seed
/// drives training; `train.seed` and `train.jobs` are not serialized.
struct RunConfig {
  StftConfig stft;
  SdeConfig sde;
  ScoreNetConfig net;
  TrainConfig train;
  SamplerConfig sampler;
  int sample_rate_hz = 16000;
  uint64_t seed = 0;

  void validate() const {
    stft.validate();
    sde.validate();
    net.validate();
    train.validate();
    sampler.validate();
    require(sample_rate_hz > 0, ErrorKind::Config, "sample_rate_hz must be positive");
  }
};

namespace config_detail {
using nlohmann::json;

inline void check_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  require(j.is_object(), ErrorKind::Config, where + " must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    require(ok, ErrorKind::Config, "unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(ErrorKind::Config, where + "." + key + " has the wrong type");
  }
}
}  // namespace config_detail

inline nlohmann::json to_json(const RunConfig& c) {
  return {
      {"stft",
       {{"win_len", c.stft.win_len}, {"hop", c.stft.hop}, {"fft_size", c.stft.fft_size},
        {"compression_scale", c.stft.compression_scale}}},
      {"sde",
       {{"gamma", c.sde.gamma}, {"sigma_min", c.sde.sigma_min}, {"sigma_max", c.sde.sigma_max}, {"t_max", c.sde.t_max},
        {"t_eps", c.sde.t_eps}}},
      {"net",
       {{"levels", c.net.levels}, {"channels", c.net.channels}, {"embed_dim", c.net.embed_dim},
        {"mode", to_string(c.net.mode)}}},
      {"train",
       {{"lr", c.train.lr}, {"batch_size", c.train.batch_size}, {"ema_decay", c.train.ema_decay},
        {"max_epochs", c.train.max_epochs}, {"patience", c.train.patience}, {"adam_beta1", c.train.adam_beta1},
        {"adam_beta2", c.train.adam_beta2}, {"adam_eps", c.train.adam_eps}, {"patch_frames", c.train.patch_frames},
        {"val_fraction", c.train.val_fraction}, {"val_draws", c.train.val_draws}, {"max_steps", c.train.max_steps},
        {"record_wall_time", c.train.record_wall_time}}},
      {"sampler",
       {{"n_steps", c.sampler.n_steps}, {"corrector_steps", c.sampler.corrector_steps}, {"snr_r", c.sampler.snr_r},
        {"scheme", to_string(c.sampler.scheme)}}},
      {"sample_rate_hz", c.sample_rate_hz},
      {"seed", c.seed},
  };
}

/// Missing keys keep their defaults; unknown keys are a config error.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  using namespace config_detail;
  RunConfig c;
  check_keys(j, {"stft", "sde", "net", "train", "sampler", "sample_rate_hz", "seed"}, "config");
  if (j.contains("stft")) {
    const json& s = j.at("stft");
    check_keys(s, {"win_len", "hop", "fft_size", "compression_scale"}, "stft");
    read(s, "win_len", c.stft.win_len, "stft");
    read(s, "hop", c.stft.hop, "stft");
    read(s, "fft_size", c.stft.fft_size, "stft");
    read(s, "compression_scale", c.stft.compression_scale, "stft");
  }
  if (j.contains("sde")) {
    const json& s = j.at("sde");
    check_keys(s, {"gamma", "sigma_min", "sigma_max", "t_max", "t_eps"}, "sde");
    read(s, "gamma", c.sde.gamma, "sde");
    read(s, "sigma_min", c.sde.sigma_min, "sde");
    read(s, "sigma_max", c.sde.sigma_max, "sde");
    read(s, "t_max", c.sde.t_max, "sde");
    read(s, "t_eps", c.sde.t_eps, "sde");
  }
  if (j.contains("net")) {
    const json& s = j.at("net");
    check_keys(s, {"levels", "channels", "embed_dim", "mode"}, "net");
    read(s, "levels", c.net.levels, "net");
    read(s, "channels", c.net.channels, "net");
    read(s, "embed_dim", c.net.embed_dim, "net");
    std::string mode = to_string(c.net.mode);
    read(s, "mode", mode, "net");
    c.net.mode = net_mode_from_string(mode);
  }
  if (j.contains("train")) {
    const json& s = j.at("train");
    check_keys(s,
               {"lr", "batch_size", "ema_decay", "max_epochs", "patience", "adam_beta1", "adam_beta2", "adam_eps",
                "patch_frames", "val_fraction", "val_draws", "max_steps", "record_wall_time"},
               "train");
    read(s, "lr", c.train.lr, "train");
    read(s, "batch_size", c.train.batch_size, "train");
    read(s, "ema_decay", c.train.ema_decay, "train");
    read(s, "max_epochs", c.train.max_epochs, "train");
    read(s, "patience", c.train.patience, "train");
    read(s, "adam_beta1", c.train.adam_beta1, "train");
    read(s, "adam_beta2", c.train.adam_beta2, "train");
    read(s, "adam_eps", c.train.adam_eps, "train");
    read(s, "patch_frames", c.train.patch_frames, "train");
    read(s, "val_fraction", c.train.val_fraction, "train");
    read(s, "val_draws", c.train.val_draws, "train");
    read(s, "max_steps", c.train.max_steps, "train");
    read(s, "record_wall_time", c.train.record_wall_time, "train");
  }
  if (j.contains("sampler")) {
    const json& s = j.at("sampler");
    check_keys(s, {"n_steps", "corrector_steps", "snr_r", "scheme"}, "sampler");
    read(s, "n_steps", c.sampler.n_steps, "sampler");
    read(s, "corrector_steps", c.sampler.corrector_steps, "sampler");
    read(s, "snr_r", c.sampler.snr_r, "sampler");
    std::string scheme = to_string(c.sampler.scheme);
    read(s, "scheme", scheme, "sampler");
    c.sampler.scheme = sampler_scheme_from_string(scheme);
  }
  read(j, "sample_rate_hz", c.sample_rate_hz, "config");
  read(j, "seed", c.seed, "config");
  c.train.seed = c.seed;
  c.validate();
  return c;
}

inline RunConfig read_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

inline void write_run_config(const std::filesystem::path& path, const RunConfig& c) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  out << to_json(c).dump(2) << "\n";
}

}  // namespace sde_restore
