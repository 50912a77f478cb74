#pragma once

// Operation-guided attention model: record/operation/result encoders and the
// gated dual-attention GRU decoder with a pointer-generator output.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "opatt/config.hpp"
#include "opatt/data.hpp"
#include "opatt/graph.hpp"
#include "opatt/op_engine.hpp"

namespace opatt {

// An operation expressed in embedding ids.
struct OpInput {
  OpKind kind = OpKind::Minus;
  std::size_t column_id = 0;
  std::vector<std::size_t> arg_row_ids;  // empty: ALL
};

struct ScalarInput {
  OpInput op;
  double value = 0.0;
};

struct IndexInput {
  OpInput op;
  std::size_t row_id = 0;
};

// Everything the network reads for one example.
struct ModelInput {
  std::vector<IndexedRecord> records;
  std::vector<ScalarInput> scalars;
  std::vector<IndexInput> indices;
  // Operation results rendered as records, scalars first, used only with
  // ops_as_records.
  std::vector<IndexedRecord> result_records;
  std::vector<std::size_t> copy_ids;  // extended id per record
  std::size_t extended_size = 0;
  std::vector<std::string> oov_values;
  std::vector<std::size_t> target_ids;  // BOS ... EOS; empty when decoding only
};

ModelInput make_model_input(const IndexedExample& ex, const std::vector<OperationResult>& results,
                            const Vocab& vocab);

// Indexes each example and attaches its operation results. A nonzero
// max_text_len truncates reference texts before EOS is appended.
std::vector<ModelInput> prepare_inputs(const std::vector<Example>& examples,
                                       const std::vector<std::vector<OperationResult>>& results, const Vocab& vocab,
                                       std::size_t max_text_len = 0);
std::vector<ModelInput> prepare_inputs(const std::vector<Example>& examples, const Vocab& vocab,
                                       const OpConfig& ops = {}, std::size_t max_text_len = 0);

template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::size_t vocab_size, std::size_t field_count);

  const ModelConfig& config() const { return config_; }
  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t field_count() const { return field_count_; }
  ParamSet<T>& params() { return params_; }
  const ParamSet<T>& params() const { return params_; }

  // Normal(0, s^2) with s = sqrt(6 / (rows + cols)); biases and the
  // quantization affine start at zero.
  void init(std::uint64_t seed);

  template <typename U>
  Model<U> cast() const;

  // ---- encoders

  struct Quantized {
    Var weights;  // L x 1, softmax over bins
    Var state;    // Dh x 1
  };

  struct Encoded {
    Var record_states;  // Dh x K (records, plus result records with ops_as_records)
    Var record_keys;    // record-attention key projection, A x K
    Var copy_states;    // Dh x K_copy (original records only)
    Var copy_keys;      // A x K_copy
    Var scalar_keys;    // A x N_scl, invalid when no scalar results
    Var scalar_values;  // Dh x N_scl
    Var index_keys;
    Var index_values;
    Var bridge;  // Dh x 1
    std::vector<Quantized> quantized;
    std::vector<std::size_t> copy_ids;
    std::size_t extended_size = 0;
  };

  struct RecordEncoding {
    std::vector<Var> states;  // one Dh x 1 state per record: [forward; backward]
    Var matrix;               // states as columns, Dh x K
    Var bridge;               // decoder initial state, Dh x 1
  };

  Var embed_record(Graph<T>& g, const IndexedRecord& r) const;
  RecordEncoding encode_records(Graph<T>& g, std::span<const Var> record_vectors) const;
  Var encode_op_args(Graph<T>& g, const OpInput& op) const;
  Var encode_operation(Graph<T>& g, const OpInput& op) const;
  Quantized quantize_scalar(Graph<T>& g, double value) const;
  Var encode_index_result(Graph<T>& g, std::size_t row_id) const;
  Encoded encode(Graph<T>& g, const ModelInput& input) const;

  // ---- decoder

  enum class Attention { Scalar = 0, Index = 1, Record = 2, Copy = 3 };

  struct Attended {
    Var context;
    Var weights;  // K x 1
  };

  struct State {
    Var d;       // Dh x 1
    Var c_prev;  // Dh x 1
    std::size_t t = 0;
  };

  struct StepOutput {
    State next;
    Var dist;     // extended vocabulary
    Var p_vocab;  // vocabulary softmax
    Var lambda;
    Var p_gen;
    Var alpha_ctx, alpha_scl, alpha_idx, alpha_new;
    Var c_t, c_op, c_ctx, c_scl, c_idx;
  };

  struct Overrides {
    std::optional<T> lambda;
    std::optional<T> p_gen;
  };

  Var project_keys(Graph<T>& g, Attention which, Var keys) const;
  // keys are pre-projected with project_keys().
  Attended attend(Graph<T>& g, Attention which, Var query, Var key_proj, Var values) const;
  Var combine_op_contexts(Graph<T>& g, Var c_scl, Var c_idx) const;
  // Returns (c_t, lambda).
  std::pair<Var, Var> gate_contexts(Graph<T>& g, Var d_t, Var c_op, Var c_ctx,
                                    std::optional<T> forced = std::nullopt) const;
  Var copy_attention(Graph<T>& g, const Encoded& enc, Var d_prev, Var c_t) const;
  Var generation_gate(Graph<T>& g, Var c_t, Var d_t, Var y_prev_embedding) const;

  State initial_state(Graph<T>& g, const Encoded& enc) const;
  StepOutput step(Graph<T>& g, const Encoded& enc, const State& state, std::size_t y_prev,
                  const Overrides& overrides = {}) const;

  struct LossStats {
    std::size_t tokens = 0;
    std::size_t floor_hits = 0;
    double lambda_min = 1.0;
    double lambda_max = 0.0;
    double lambda_sum = 0.0;
    std::size_t lambda_count = 0;
  };

  // Teacher-forced sum over target positions of -log P(y_t | y_<t, S).
  Var example_loss(Graph<T>& g, const ModelInput& input, LossStats* stats = nullptr) const;

  std::size_t input_embedding_id(std::size_t extended_id) const {
    return extended_id < vocab_size_ ? extended_id : Vocab::kUnk;
  }

 private:
  struct AttentionParams {
    ParamId wq, wk, b, v;
  };

  ParamId add(const std::string& name, Shape shape, bool zero_init = false);
  const AttentionParams& attn(Attention which) const { return attn_[static_cast<std::size_t>(which)]; }
  Var sum_terms(Graph<T>& g, const std::vector<Var>& terms) const;

  ModelConfig config_;
  std::size_t vocab_size_ = 0;
  std::size_t field_count_ = 0;
  ParamSet<T> params_;
  std::vector<bool> zero_init_;

  ParamId emb_word_, emb_field_, emb_row_, emb_kind_;
  ParamId enc_fwd_wx_, enc_fwd_wh_, enc_fwd_b_, enc_bwd_wx_, enc_bwd_wh_, enc_bwd_b_;
  ParamId bridge_w_, bridge_b_;
  ParamId arg_w0_, arg_w1_, arg_wall_, arg_b_, op_w_, op_b_;
  ParamId quant_w_, quant_b_, quant_emb_, direct_w_, direct_b_, idx_proj_;
  ParamId dec_wx_, dec_wh_, dec_b_;
  AttentionParams attn_[4];
  ParamId comb_w_, comb_b_, gate_w_, gate_b_;
  ParamId out_w_, out_b_, vocab_w_, vocab_b_;
  ParamId ptr_wc_, ptr_wd_, ptr_wy_, ptr_b_;

  template <typename U>
  friend class Model;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace opatt
