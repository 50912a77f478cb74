#include "opatt/manifest.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <fstream>
#include <span>
#include <sstream>

#include "opatt/error.hpp"

namespace opatt {

namespace fs = std::filesystem;

std::string git_blob_hash(std::string_view bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  const bool ok = ctx && EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) && EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("SHA-1 digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char b : std::span(digest, len)) {
    out += hex[b >> 4];
    out += hex[b & 15];
  }
  return out;
}

std::string git_blob_hash_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return git_blob_hash(ss.str());
}

nlohmann::json manifest_to_json(const RunManifest& m) {
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& p : m.inputs) {
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) inputs.push_back({{"path", f.string()}, {"git_blob_sha1", git_blob_hash_file(f)}});
    } else {
      inputs.push_back({{"path", p.string()}, {"git_blob_sha1", git_blob_hash_file(p)}});
    }
  }
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& p : m.outputs) outputs.push_back(p.string());
  return {{"command", m.command}, {"config", m.config},   {"seed", m.seed},
          {"inputs", inputs},     {"outputs", outputs}, {"wall_clock_seconds", m.wall_clock_seconds}};
}

void write_manifest(const fs::path& path, const RunManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  out << manifest_to_json(m).dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest " + path.string());
}

}  // namespace opatt
