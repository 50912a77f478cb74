#pragma once

#include <cstddef>
#include <cstdint>

#include "json.hpp"

namespace opatt {

struct ModelConfig {
  std::size_t word_dim = 256;     // word, field and operation-kind embeddings
  std::size_t row_dim = 32;       // row-index embeddings
  std::size_t enc_hidden = 256;   // per direction; 2 * enc_hidden == dec_hidden
  std::size_t dec_hidden = 512;   // decoder state, h^ctx, h^op, h^res and contexts
  std::size_t attn_hidden = 512;  // hidden width of every attention perceptron
  std::size_t quant_bins = 5;
  int row_capacity = 64;
  double scalar_scale = 1.0;  // scalar results are divided by this before quantization

  bool no_argmax = false;
  bool no_quantization = false;
  bool no_gate = false;
  bool no_ops = false;
  // Feed operation results to the record encoder as extra records instead of
  // the operation branch (the "results as extra records" baseline).
  bool ops_as_records = false;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  ModelConfig model;
  std::size_t epochs = 40;
  std::size_t batch_size = 32;
  double rho = 0.95;
  double epsilon = 1e-6;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  std::size_t min_count = 1;
  std::size_t max_text_len = 0;  // 0: no truncation of reference texts
  bool both_orders = false;
  int threads = 0;  // 0: OpenMP default

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace opatt
