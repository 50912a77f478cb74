#include "opatt/config.hpp"

#include <algorithm>
#include <iterator>
#include <string>

#include "opatt/error.hpp"

namespace opatt {

using json = nlohmann::json;

void ModelConfig::validate() const {
  if (word_dim == 0 || row_dim == 0 || enc_hidden == 0 || dec_hidden == 0 || attn_hidden == 0) {
    throw ContractError("model dimensions must be positive");
  }
  if (2 * enc_hidden != dec_hidden) {
    throw ContractError("encoder width 2 x " + std::to_string(enc_hidden) + " must equal decoder width " +
                        std::to_string(dec_hidden));
  }
  if (quant_bins < 2) throw ContractError("quant_bins must be >= 2");
  if (row_capacity < 1) throw ContractError("row_capacity must be >= 1");
  if (!(scalar_scale > 0.0)) throw ContractError("scalar_scale must be positive");
}

void TrainConfig::validate() const {
  model.validate();
  if (epochs == 0) throw ContractError("epochs must be >= 1");
  if (batch_size == 0) throw ContractError("batch_size must be >= 1");
  if (!(rho > 0.0 && rho < 1.0)) throw ContractError("rho must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ContractError("epsilon must be positive");
  if (!(clip_norm >= 0.0)) throw ContractError("clip_norm must be >= 0");
  if (min_count == 0) throw ContractError("min_count must be >= 1");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"word_dim", c.word_dim},         {"row_dim", c.row_dim},
           {"enc_hidden", c.enc_hidden},     {"dec_hidden", c.dec_hidden},
           {"attn_hidden", c.attn_hidden},   {"quant_bins", c.quant_bins},
           {"row_capacity", c.row_capacity}, {"scalar_scale", c.scalar_scale},
           {"no_argmax", c.no_argmax},       {"no_quantization", c.no_quantization},
           {"no_gate", c.no_gate},           {"no_ops", c.no_ops},
           {"ops_as_records", c.ops_as_records}};
}

// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const json& j, ModelConfig& c) {
  static const char* known[] = {"word_dim", "row_dim", "enc_hidden", "dec_hidden", "attn_hidden",
                                "quant_bins", "row_capacity", "scalar_scale", "no_argmax",
                                "no_quantization", "no_gate", "no_ops", "ops_as_records"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ContractError("unknown model config key " + key);
    }
  }
  c.word_dim = j.value("word_dim", c.word_dim);
  c.row_dim = j.value("row_dim", c.row_dim);
  c.dec_hidden = j.value("dec_hidden", c.dec_hidden);
  c.enc_hidden = j.value("enc_hidden", j.contains("dec_hidden") ? c.dec_hidden / 2 : c.enc_hidden);
  c.attn_hidden = j.value("attn_hidden", j.contains("dec_hidden") ? c.dec_hidden : c.attn_hidden);
  c.quant_bins = j.value("quant_bins", c.quant_bins);
  c.row_capacity = j.value("row_capacity", c.row_capacity);
  c.scalar_scale = j.value("scalar_scale", c.scalar_scale);
  c.no_argmax = j.value("no_argmax", c.no_argmax);
  c.no_quantization = j.value("no_quantization", c.no_quantization);
  c.no_gate = j.value("no_gate", c.no_gate);
  c.no_ops = j.value("no_ops", c.no_ops);
  c.ops_as_records = j.value("ops_as_records", c.ops_as_records);
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"model", c.model},           {"epochs", c.epochs},
           {"batch_size", c.batch_size}, {"rho", c.rho},
           {"epsilon", c.epsilon},       {"clip_norm", c.clip_norm},
           {"seed", c.seed},             {"min_count", c.min_count},
           {"max_text_len", c.max_text_len}, {"both_orders", c.both_orders},
           {"threads", c.threads}};
}

void from_json(const json& j, TrainConfig& c) {
  static const char* known[] = {"model", "epochs", "batch_size", "rho", "epsilon", "clip_norm",
                                "seed", "min_count", "max_text_len", "both_orders", "threads"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw ContractError("unknown train config key " + key);
    }
  }
  if (j.contains("model")) j.at("model").get_to(c.model);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.rho = j.value("rho", c.rho);
  c.epsilon = j.value("epsilon", c.epsilon);
  c.clip_norm = j.value("clip_norm", c.clip_norm);
  c.seed = j.value("seed", c.seed);
  c.min_count = j.value("min_count", c.min_count);
  c.max_text_len = j.value("max_text_len", c.max_text_len);
  c.both_orders = j.value("both_orders", c.both_orders);
  c.threads = j.value("threads", c.threads);
}

}  // namespace opatt
