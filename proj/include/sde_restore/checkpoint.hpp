// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sde_restore/config.hpp"
#include "sde_restore/error.hpp"
#include "sde_restore/score_net.hpp"

namespace sde_restore {

// Layout (little endian):
//   "SDRK" | u32 version | u64 n | n bytes of JSON {"config", "best_epoch", ...}
//   | tensor set (raw weights) | tensor set (EMA weights)
// tensor set: u32 count, then per tensor u32 name length, name, u32 rank,
// rank x i32 dims, float32 values.
inline constexpr char kCheckpointMagic[4] = {'S', 'D', 'R', 'K'};
inline constexpr uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  RunConfig config;
  NetParams<float> params;
  NetParams<float> ema;
  int best_epoch = 0;
  double best_val_loss = 0.0;
  int64_t steps = 0;

  /// Inference network, using the EMA weights.
  ScoreNetwork<float> network() const { return {config.net, config.sde, ema}; }
};

namespace ckpt_detail {
template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  require(static_cast<bool>(in), ErrorKind::Format, path + ": truncated checkpoint");
  return v;
}

inline void put_set(std::ostream& out, const NetParams<float>& p) {
  put<uint32_t>(out, static_cast<uint32_t>(p.tensors.size()));
  for (const auto& t : p.tensors) {
    put<uint32_t>(out, static_cast<uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    put<uint32_t>(out, static_cast<uint32_t>(t.dims.size()));
    for (int d : t.dims) put<int32_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.value.data()), static_cast<std::streamsize>(t.value.size() * sizeof(float)));
  }
}

inline NetParams<float> get_set(std::istream& in, const NetParams<float>& layout, const std::string& path) {
  NetParams<float> p;
  const auto count = get<uint32_t>(in, path);
  require(count == layout.tensors.size(), ErrorKind::Format, path + ": tensor count does not match the stored config");
  for (uint32_t i = 0; i < count; ++i) {
    ParamTensor<float> t;
    const auto len = get<uint32_t>(in, path);
    require(len < 4096, ErrorKind::Format, path + ": bad tensor name length");
    t.name.resize(len);
    in.read(t.name.data(), len);
    const auto rank = get<uint32_t>(in, path);
    require(rank <= 8, ErrorKind::Format, path + ": bad tensor rank");
    std::size_t n = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(get<int32_t>(in, path));
      n *= static_cast<std::size_t>(t.dims.back());
    }
    const ParamTensor<float>& want = layout.tensors[i];
    require(t.name == want.name && t.dims == want.dims, ErrorKind::Format,
            path + ": tensor '" + t.name + "' does not match the stored config");
    t.value.resize(n);
    in.read(reinterpret_cast<char*>(t.value.data()), static_cast<std::streamsize>(n * sizeof(float)));
    require(static_cast<bool>(in), ErrorKind::Format, path + ": truncated checkpoint");
    p.tensors.push_back(std::move(t));
  }
  return p;
}
}  // namespace ckpt_detail

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  using namespace ckpt_detail;
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write " + path.string());
  const nlohmann::json meta = {{"config", to_json(ck.config)},
                               {"best_epoch", ck.best_epoch},
                               {"best_val_loss", ck.best_val_loss},
                               {"steps", ck.steps}};
  const std::string js = meta.dump();
  out.write(kCheckpointMagic, 4);
  put<uint32_t>(out, kCheckpointVersion);
  put<uint64_t>(out, js.size());
  out.write(js.data(), static_cast<std::streamsize>(js.size()));
  put_set(out, ck.params);
  put_set(out, ck.ema);
  require(static_cast<bool>(out), ErrorKind::Io, "write failed for " + path.string());
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  using namespace ckpt_detail;
  const std::string ps = path.string();
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open checkpoint " + ps);
  char magic[4] = {};
  in.read(magic, 4);
  require(static_cast<bool>(in) && std::memcmp(magic, kCheckpointMagic, 4) == 0, ErrorKind::Format,
          ps + ": not a checkpoint file");
  const auto version = get<uint32_t>(in, ps);
  require(version == kCheckpointVersion, ErrorKind::Unsupported, ps + ": checkpoint version " + std::to_string(version));
  const auto n = get<uint64_t>(in, ps);
  require(n < (1u << 24), ErrorKind::Format, ps + ": bad config block size");
  std::string js(n, '\0');
  in.read(js.data(), static_cast<std::streamsize>(n));
  require(static_cast<bool>(in), ErrorKind::Format, ps + ": truncated checkpoint");
  Checkpoint ck;
  try {
    const nlohmann::json meta = nlohmann::json::parse(js);
    ck.config = run_config_from_json(meta.at("config"));
    ck.best_epoch = meta.at("best_epoch").get<int>();
    ck.best_val_loss = meta.at("best_val_loss").get<double>();
    ck.steps = meta.at("steps").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, ps + ": " + e.what());
  }
  const NetParams<float> layout = empty_params<float>(ck.config.net);
  ck.params = get_set(in, layout, ps);
  ck.ema = get_set(in, layout, ps);
  return ck;
}

}  // namespace sde_restore
