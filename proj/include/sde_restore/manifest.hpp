// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sde_restore/corruptions.hpp"
#include "sde_restore/error.hpp"

namespace sde_restore {

/// One JSONL line: {"clean", "corrupted", "task", "spec", "seed"}. Paths are
/// relative to the manifest's directory.
struct ManifestRow {
  std::string clean;
  std::string corrupted;
  Task task = Task::Noise;
  CorruptionSpec spec;
  uint64_t seed = 0;

  std::string id() const { return std::filesystem::path(corrupted).stem().string(); }
};

struct Manifest {
  std::filesystem::path dir;
  std::vector<ManifestRow> rows;

  std::filesystem::path resolve(const std::string& rel) const {
    const std::filesystem::path p(rel);
    return p.is_absolute() ? p : dir / p;
  }
};

inline nlohmann::json to_json(const ManifestRow& r) {
  return {{"clean", r.clean}, {"corrupted", r.corrupted}, {"task", to_string(r.task)}, {"spec", to_json(r.spec)},
          {"seed", r.seed}};
}

inline Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open manifest " + path.string());
  Manifest m;
  m.dir = path.parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      ManifestRow r;
      r.clean = j.at("clean").get<std::string>();
      r.corrupted = j.at("corrupted").get<std::string>();
      r.task = task_from_string(j.at("task").get<std::string>());
      r.spec = corruption_spec_from_json(j.at("spec"));
      r.seed = j.at("seed").get<uint64_t>();
      m.rows.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::Format, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write manifest " + path.string());
  for (const auto& r : rows) out << to_json(r).dump() << "\n";
}

}  // namespace sde_restore
