#pragma once

// Checkpoint file: one JSON manifest line
//   {"version", "config", "seed", "arrays": [{"name", "shape"}], "vocab": {...}}
// followed by little-endian float32 payloads in manifest order.

#include <cstdint>
#include <filesystem>
#include <string>

#include "opatt/config.hpp"
#include "opatt/data.hpp"
#include "opatt/model.hpp"

namespace opatt {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  Vocab vocab;
  Model<float> model;
};

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model, const Vocab& vocab,
                     const TrainConfig& config);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace opatt
