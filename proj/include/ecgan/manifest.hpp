#pragma once

#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecgan/errors.hpp"

// Every command that produces an artifact directory drops a manifest.json
// into it: the command name, the fully resolved configuration, the input and
// output paths, the seed, and timestamps. A run can be reproduced from the
// manifest alone. Written atomically (temp file + rename) so a crash never
// leaves a torn manifest.

namespace ecgan {

inline constexpr const char* kVersion = "1.0.0";

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::string status = "ok";
};

inline std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline nlohmann::json manifest_to_json(const RunManifest& m) {
  return {{"format", "ecgan-manifest"}, {"version", kVersion},
          {"command", m.command},       {"config", m.config},
          {"inputs", m.inputs},         {"outputs", m.outputs},
          {"seed", m.seed},             {"started_at", m.started_at},
          {"finished_at", m.finished_at}, {"status", m.status}};
}

inline RunManifest manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.command = j.at("command").get<std::string>();
  m.config = j.at("config");
  m.inputs = j.at("inputs").get<std::vector<std::string>>();
  m.outputs = j.at("outputs").get<std::vector<std::string>>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.started_at = j.at("started_at").get<std::string>();
  m.finished_at = j.at("finished_at").get<std::string>();
  m.status = j.at("status").get<std::string>();
  return m;
}

inline void write_manifest(const std::string& dir, const RunManifest& m) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path final_path = fs::path(dir) / "manifest.json";
  const fs::path tmp_path = fs::path(dir) / "manifest.json.tmp";
  {
    std::ofstream out(tmp_path);
    if (!out)
      throw std::runtime_error("cannot write manifest: " + tmp_path.string());
    out << manifest_to_json(m).dump(2) << "\n";
  }
  fs::rename(tmp_path, final_path);
}

inline RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest " + path + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "ecgan-manifest")
    throw FormatError("not a manifest: " + path);
  try {
    return manifest_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest " + path + ": " + e.what());
  }
}

}  // namespace ecgan
