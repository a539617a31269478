#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "narrative_infill/error.hpp"

namespace narrative_infill::run {

inline constexpr const char* kToolVersion = "0.1.0";

// FNV-1a 64 over the file bytes, as 16 hex digits.
inline std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string() + " for checksum");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

struct RunManifest {
  std::string tool_version = kToolVersion;
  std::string config;  // flat config snapshot
  std::uint64_t seed = 0;
  std::string corpus_path;
  std::string corpus_checksum;
  // role -> path relative to the manifest directory, and its checksum
  std::map<std::string, std::string> artifacts;
  std::map<std::string, std::string> checksums;

  void add_artifact(const std::string& role, const std::filesystem::path& dir, const std::string& relative) {
    artifacts[role] = relative;
    checksums[role] = file_checksum(dir / relative);
  }
};

inline nlohmann::json to_json(const RunManifest& m) {
  nlohmann::json artifacts = nlohmann::json::object();
  for (const auto& [role, path] : m.artifacts) {
    artifacts[role] = {{"path", path}, {"checksum", m.checksums.at(role)}};
  }
  return {{"tool_version", m.tool_version}, {"config", m.config},           {"seed", m.seed},
          {"corpus", {{"path", m.corpus_path}, {"checksum", m.corpus_checksum}}},
          {"artifacts", artifacts}};
}

inline void save_manifest(const std::filesystem::path& path, const RunManifest& m) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write manifest " + path.string());
  out << to_json(m).dump(2) << '\n';
}

inline RunManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  RunManifest m;
  try {
    const auto j = nlohmann::json::parse(in);
    m.tool_version = j.at("tool_version").get<std::string>();
    m.config = j.at("config").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.corpus_path = j.at("corpus").at("path").get<std::string>();
    m.corpus_checksum = j.at("corpus").at("checksum").get<std::string>();
    for (const auto& [role, a] : j.at("artifacts").items()) {
      m.artifacts[role] = a.at("path").get<std::string>();
      m.checksums[role] = a.at("checksum").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

// Returns the roles whose files are missing or whose checksum changed.
inline std::vector<std::string> verify_manifest(const std::filesystem::path& path) {
  const auto m = load_manifest(path);
  const auto dir = path.parent_path();
  std::vector<std::string> bad;
  for (const auto& [role, rel] : m.artifacts) {
    const auto p = dir / rel;
    if (!std::filesystem::exists(p) || file_checksum(p) != m.checksums.at(role)) bad.push_back(role);
  }
  return bad;
}

}  // namespace narrative_infill::run
