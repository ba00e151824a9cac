#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace rp::cli {

struct InputDigest {
  std::string path;
  std::string sha256;
  std::uint64_t bytes = 0;
};

/// Provenance record written next to every artifact a command produces.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::uint64_t seed = 0;
  std::vector<InputDigest> inputs;
  std::vector<std::string> outputs;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::string started_at;
  std::string finished_at;

  void add_input(const std::string& path);
  nlohmann::ordered_json to_json() const;
  /// Writes `<artifact>.manifest.json`, or `manifest.json` inside a directory artifact.
  void write_for(const std::string& artifact) const;
};

std::string sha256_file(const std::string& path);
std::string utc_now();

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace rp::cli
