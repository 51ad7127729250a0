#pragma once

#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "sennet/errors.hpp"
#include "sennet/rng.hpp"
#include "sennet/version.hpp"

namespace sennet {

inline std::uint64_t file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[8192];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a64(buf, static_cast<std::size_t>(in.gcount()), h);
  return h;
}

// Pins everything needed to reproduce a command: the resolved config, input
// file fingerprints, the seed, and the planned output paths. Written
// atomically before any results.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, std::uint64_t> inputs;  // path -> content fingerprint
  std::uint64_t seed = 0;
  std::string tool_version = kToolVersion;
  int format_version = kFormatVersion;
  std::vector<std::string> outputs;
};

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json j;
  j["command"] = m.command;
  j["config"] = m.config;
  nlohmann::json inputs = nlohmann::json::object();
  for (const auto& [path, fp] : m.inputs) inputs[path] = fp;
  j["inputs"] = inputs;
  j["seed"] = m.seed;
  j["tool_version"] = m.tool_version;
  j["format_version"] = m.format_version;
  j["outputs"] = m.outputs;
  return j;
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config");
  for (auto it = j.at("inputs").begin(); it != j.at("inputs").end(); ++it)
    m.inputs[it.key()] = it.value().get<std::uint64_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.tool_version = j.at("tool_version").get<std::string>();
  m.format_version = j.at("format_version").get<int>();
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  return m;
}

inline void write_manifest(const RunManifest& m, const std::string& path) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp);
    out << to_json(m).dump(2) << "\n";
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move " + tmp + " to " + path);
}

inline RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaMismatchError(path + ": bad JSON: " + e.what());
  }
  return manifest_from_json(j);
}

}  // namespace sennet
