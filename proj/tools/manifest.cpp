#include "manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>

#include "rp/common.hpp"
#include "rp/rng.hpp"

namespace rp::cli {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out += kHex[md[k] >> 4];
    out += kHex[md[k] & 15];
  }
  return out;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::add_input(const std::string& path) {
  inputs.push_back({path, sha256_file(path), static_cast<std::uint64_t>(std::filesystem::file_size(path))});
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["tool"] = "rp";
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  j["argv"] = argv;
  j["seed"] = seed;
  j["prng"] = kPrngName;
  auto& in = j["inputs"] = nlohmann::ordered_json::array();
  for (const auto& d : inputs) in.push_back({{"path", d.path}, {"sha256", d.sha256}, {"bytes", d.bytes}});
  j["outputs"] = outputs;
  j["config"] = config;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j;
}

void RunManifest::write_for(const std::string& artifact) const {
  namespace fs = std::filesystem;
  const fs::path p = fs::is_directory(artifact) ? fs::path(artifact) / "manifest.json"
                                                : fs::path(artifact + ".manifest.json");
  std::ofstream out(p);
  if (!out) throw DataError("cannot write manifest '" + p.string() + "'");
  out << to_json().dump(2) << '\n';
}

}  // namespace rp::cli
