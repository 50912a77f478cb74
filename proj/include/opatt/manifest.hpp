#pragma once

// Run manifests written beside every artifact.

#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

namespace opatt {

// Git blob id: SHA-1 over "blob <size>\0" followed by the bytes.
std::string git_blob_hash(std::string_view bytes);
std::string git_blob_hash_file(const std::filesystem::path& path);

struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;  // files, or directories (every regular file inside)
  std::vector<std::filesystem::path> outputs;
  double wall_clock_seconds = 0.0;
};

nlohmann::json manifest_to_json(const RunManifest& m);
void write_manifest(const std::filesystem::path& path, const RunManifest& m);

}  // namespace opatt
