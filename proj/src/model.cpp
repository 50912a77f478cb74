#include "opatt/model.hpp"

#include <charconv>
#include <cmath>
#include <random>

#include "opatt/error.hpp"

namespace opatt {

namespace {

std::string format_number(double v) {
  if (std::abs(v) < 1e15 && v == std::trunc(v)) return std::to_string(static_cast<long long>(v));
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

OpInput op_input(const Operation& op, const Vocab& vocab) {
  OpInput in;
  in.kind = op.kind;
  in.column_id = vocab.field_id(op.column);
  for (int row : op.args) in.arg_row_ids.push_back(vocab.row_id(row));
  return in;
}

}  // namespace

ModelInput make_model_input(const IndexedExample& ex, const std::vector<OperationResult>& results,
                            const Vocab& vocab) {
  ModelInput in;
  in.records = ex.records;
  for (const auto& r : ex.records) in.copy_ids.push_back(r.copy_id);
  in.extended_size = ex.extended_size;
  in.oov_values = ex.oov_values;
  in.target_ids = ex.target_ids;
  std::vector<IndexedRecord> index_records;  // appended after the scalar ones
  for (const auto& res : results) {
    OpInput op = op_input(res.op, vocab);
    IndexedRecord as_record;
    as_record.field_id = op.column_id;
    if (res.is_scalar()) {
      as_record.row_id = vocab.all_row_id();
      as_record.value_id = vocab.word_id(format_number(res.scalar()));
      in.scalars.push_back({std::move(op), res.scalar()});
    } else {
      const std::size_t row = vocab.row_id(res.index());
      as_record.row_id = row;
      as_record.value_id = Vocab::kUnk;
      in.indices.push_back({std::move(op), row});
    }
    (res.is_scalar() ? in.result_records : index_records).push_back(as_record);
  }
  in.result_records.insert(in.result_records.end(), index_records.begin(), index_records.end());
  return in;
}

std::vector<ModelInput> prepare_inputs(const std::vector<Example>& examples,
                                       const std::vector<std::vector<OperationResult>>& results, const Vocab& vocab,
                                       std::size_t max_text_len) {
  if (results.size() != examples.size()) {
    throw ContractError(std::to_string(examples.size()) + " examples but " + std::to_string(results.size()) +
                        " operation result lists");
  }
  std::vector<ModelInput> out;
  out.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    if (max_text_len > 0 && examples[i].text.size() > max_text_len) {
      Example cut = examples[i];
      cut.text.resize(max_text_len);
      out.push_back(make_model_input(encode_example(cut, vocab), results[i], vocab));
    } else {
      out.push_back(make_model_input(encode_example(examples[i], vocab), results[i], vocab));
    }
  }
  return out;
}

std::vector<ModelInput> prepare_inputs(const std::vector<Example>& examples, const Vocab& vocab, const OpConfig& ops,
                                       std::size_t max_text_len) {
  std::vector<std::vector<OperationResult>> results;
  results.reserve(examples.size());
  for (const auto& ex : examples) results.push_back(execute_all(ex.table, ops));
  return prepare_inputs(examples, results, vocab, max_text_len);
}

// ---------------------------------------------------------------- parameters

template <typename T>
ParamId Model<T>::add(const std::string& name, Shape shape, bool zero_init) {
  zero_init_.push_back(zero_init);
  return params_.add(name, shape);
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::size_t vocab_size, std::size_t field_count)
    : config_(config), vocab_size_(vocab_size), field_count_(field_count) {
  config_.validate();
  if (vocab_size <= Vocab::kSpecials) throw ContractError("vocabulary has no words beyond the specials");
  if (field_count == 0) throw ContractError("field vocabulary is empty");
  const std::size_t dw = config_.word_dim, dr = config_.row_dim, he = config_.enc_hidden,
                    dh = config_.dec_hidden, a = config_.attn_hidden, l = config_.quant_bins;
  const std::size_t rows = static_cast<std::size_t>(config_.row_capacity) + 1;
  const std::size_t rec_in = dr + 2 * dw;

  emb_word_ = add("emb.word", {vocab_size, dw});
  emb_field_ = add("emb.field", {field_count, dw});
  emb_row_ = add("emb.row", {rows, dr});
  emb_kind_ = add("emb.kind", {kOpKinds, dw});

  enc_fwd_wx_ = add("enc.fwd.wx", {3 * he, rec_in});
  enc_fwd_wh_ = add("enc.fwd.wh", {3 * he, he});
  enc_fwd_b_ = add("enc.fwd.b", {3 * he, 1}, true);
  enc_bwd_wx_ = add("enc.bwd.wx", {3 * he, rec_in});
  enc_bwd_wh_ = add("enc.bwd.wh", {3 * he, he});
  enc_bwd_b_ = add("enc.bwd.b", {3 * he, 1}, true);
  bridge_w_ = add("enc.bridge.w", {dh, 2 * he});
  bridge_b_ = add("enc.bridge.b", {dh, 1}, true);

  arg_w0_ = add("op.arg.w0", {dw, dr});
  arg_w1_ = add("op.arg.w1", {dw, dr});
  arg_wall_ = add("op.arg.wall", {dw, dr});
  arg_b_ = add("op.arg.b", {dw, 1}, true);
  op_w_ = add("op.w", {dh, 3 * dw});
  op_b_ = add("op.b", {dh, 1}, true);

  quant_w_ = add("quant.w", {l, 1}, true);
  quant_b_ = add("quant.b", {l, 1}, true);
  quant_emb_ = add("quant.emb", {l, dh});
  direct_w_ = add("res.direct.w", {dh, 1});
  direct_b_ = add("res.direct.b", {dh, 1}, true);
  idx_proj_ = add("res.idx.w", {dh, dr});

  dec_wx_ = add("dec.wx", {3 * dh, dw + dh});
  dec_wh_ = add("dec.wh", {3 * dh, dh});
  dec_b_ = add("dec.b", {3 * dh, 1}, true);

  const char* names[] = {"scl", "idx", "ctx", "copy"};
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string p = std::string("att.") + names[i] + ".";
    const std::size_t qdim = i == static_cast<std::size_t>(Attention::Copy) ? 2 * dh : dh;
    attn_[i].wq = add(p + "wq", {a, qdim});
    attn_[i].wk = add(p + "wk", {a, dh});
    attn_[i].b = add(p + "b", {a, 1}, true);
    attn_[i].v = add(p + "v", {1, a});
  }

  comb_w_ = add("comb.w", {dh, 2 * dh});
  comb_b_ = add("comb.b", {dh, 1}, true);
  gate_w_ = add("gate.w", {1, dh});
  gate_b_ = add("gate.b", {1, 1}, true);

  out_w_ = add("out.w", {dh, 2 * dh + dw});
  out_b_ = add("out.b", {dh, 1}, true);
  vocab_w_ = add("vocab.w", {vocab_size, dh});
  vocab_b_ = add("vocab.b", {vocab_size, 1}, true);

  ptr_wc_ = add("ptr.wc", {1, dh});
  ptr_wd_ = add("ptr.wd", {1, dh});
  ptr_wy_ = add("ptr.wy", {1, dw});
  ptr_b_ = add("ptr.b", {1, 1}, true);
}

template <typename T>
void Model<T>::init(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x696e6974u};
  std::mt19937_64 rng(seq);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_.at(i).value;
    if (zero_init_[i]) {
      std::fill(p.data.begin(), p.data.end(), T(0));
      continue;
    }
    const double sigma = std::sqrt(6.0 / static_cast<double>(p.shape.rows + p.shape.cols));
    std::normal_distribution<double> normal(0.0, sigma);
    for (auto& v : p.data) v = static_cast<T>(normal(rng));
  }
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out(config_, vocab_size_, field_count_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = params_.at(i).value.data;
    auto& dst = out.params_.at(i).value.data;
    for (std::size_t k = 0; k < src.size(); ++k) dst[k] = static_cast<U>(src[k]);
  }
  return out;
}

// ---------------------------------------------------------------- encoders

template <typename T>
Var Model<T>::sum_terms(Graph<T>& g, const std::vector<Var>& terms) const {
  Var acc = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) acc = g.add(acc, terms[i]);
  return acc;
}

template <typename T>
Var Model<T>::embed_record(Graph<T>& g, const IndexedRecord& r) const {
  return g.concat({g.embed(emb_row_, r.row_id), g.embed(emb_field_, r.field_id), g.embed(emb_word_, r.value_id)}, 0);
}

template <typename T>
typename Model<T>::RecordEncoding Model<T>::encode_records(Graph<T>& g, std::span<const Var> record_vectors) const {
  if (record_vectors.empty()) throw ContractError("encode_records needs at least one record");
  const std::size_t k = record_vectors.size();
  const Shape hshape{config_.enc_hidden, 1};

  std::vector<Var> fwd(k), bwd(k);
  Var h = g.zeros(hshape);
  const Var fwx = g.param(enc_fwd_wx_), fwh = g.param(enc_fwd_wh_), fb = g.param(enc_fwd_b_);
  for (std::size_t j = 0; j < k; ++j) fwd[j] = h = g.gru_cell(fwx, fwh, fb, record_vectors[j], h);
  h = g.zeros(hshape);
  const Var bwx = g.param(enc_bwd_wx_), bwh = g.param(enc_bwd_wh_), bb = g.param(enc_bwd_b_);
  for (std::size_t j = k; j-- > 0;) bwd[j] = h = g.gru_cell(bwx, bwh, bb, record_vectors[j], h);

  RecordEncoding out;
  out.states.reserve(k);
  for (std::size_t j = 0; j < k; ++j) out.states.push_back(g.concat({fwd[j], bwd[j]}, 0));
  out.matrix = g.concat(out.states, 1);
  out.bridge = g.tanh(g.linear(g.param(bridge_w_), g.concat({fwd[k - 1], bwd[0]}, 0), g.param(bridge_b_)));
  return out;
}

template <typename T>
Var Model<T>::encode_op_args(Graph<T>& g, const OpInput& op) const {
  std::vector<Var> terms;
  if (op.arg_row_ids.empty()) {
    terms.push_back(g.matmul(g.param(arg_wall_), g.embed(emb_row_, static_cast<std::size_t>(config_.row_capacity))));
  } else {
    if (op.arg_row_ids.size() > 2) throw ContractError("operations take at most two row arguments");
    const ParamId slots[] = {arg_w0_, arg_w1_};
    for (std::size_t i = 0; i < op.arg_row_ids.size(); ++i) {
      terms.push_back(g.matmul(g.param(slots[i]), g.embed(emb_row_, op.arg_row_ids[i])));
    }
  }
  return g.tanh(g.add(sum_terms(g, terms), g.param(arg_b_)));
}

template <typename T>
Var Model<T>::encode_operation(Graph<T>& g, const OpInput& op) const {
  const Var parts = g.concat({g.embed(emb_kind_, static_cast<std::size_t>(op.kind)),
                              g.embed(emb_field_, op.column_id), encode_op_args(g, op)},
                             0);
  return g.tanh(g.linear(g.param(op_w_), parts, g.param(op_b_)));
}

template <typename T>
typename Model<T>::Quantized Model<T>::quantize_scalar(Graph<T>& g, double value) const {
  if (!std::isfinite(value)) throw DomainError("scalar result is not finite");
  const Var x = g.constant(Tensor<T>::scalar(static_cast<T>(value / config_.scalar_scale)));
  if (config_.no_quantization) {
    return {Var{}, g.linear(g.param(direct_w_), x, g.param(direct_b_))};
  }
  const Var mu = g.softmax(g.linear(g.param(quant_w_), x, g.param(quant_b_)));
  // sum_l mu_l e_l = E^T mu with E stored L x Dh
  const Var state = g.transpose(g.matmul(g.transpose(mu), g.param(quant_emb_)));
  return {mu, state};
}

template <typename T>
Var Model<T>::encode_index_result(Graph<T>& g, std::size_t row_id) const {
  return g.matmul(g.param(idx_proj_), g.embed(emb_row_, row_id));
}

template <typename T>
typename Model<T>::Encoded Model<T>::encode(Graph<T>& g, const ModelInput& input) const {
  if (input.records.empty()) throw ContractError("example has no records");
  if (input.copy_ids.size() != input.records.size()) throw ContractError("copy ids do not match records");
  const bool use_ops = !config_.no_ops;
  const bool results_as_records = use_ops && config_.ops_as_records;

  std::vector<Var> vectors;
  for (const auto& r : input.records) vectors.push_back(embed_record(g, r));
  if (results_as_records) {
    for (std::size_t i = 0; i < input.result_records.size(); ++i) {
      const bool is_index = i >= input.scalars.size();
      if (is_index && config_.no_argmax) continue;
      vectors.push_back(embed_record(g, input.result_records[i]));
    }
  }
  const RecordEncoding rec = encode_records(g, vectors);

  Encoded enc;
  enc.record_states = rec.matrix;
  enc.record_keys = project_keys(g, Attention::Record, rec.matrix);
  if (vectors.size() == input.records.size()) {
    enc.copy_states = rec.matrix;
  } else {
    enc.copy_states = g.concat(std::span<const Var>(rec.states.data(), input.records.size()), 1);
  }
  enc.copy_keys = project_keys(g, Attention::Copy, enc.copy_states);
  enc.bridge = rec.bridge;
  enc.copy_ids = input.copy_ids;
  enc.extended_size = input.extended_size;

  if (use_ops && !results_as_records) {
    if (!input.scalars.empty()) {
      std::vector<Var> keys, values;
      for (const auto& s : input.scalars) {
        keys.push_back(encode_operation(g, s.op));
        Quantized q = quantize_scalar(g, s.value);
        values.push_back(q.state);
        enc.quantized.push_back(q);
      }
      enc.scalar_keys = project_keys(g, Attention::Scalar, g.concat(keys, 1));
      enc.scalar_values = g.concat(values, 1);
    }
    if (!input.indices.empty() && !config_.no_argmax) {
      std::vector<Var> keys, values;
      for (const auto& s : input.indices) {
        keys.push_back(encode_operation(g, s.op));
        values.push_back(encode_index_result(g, s.row_id));
      }
      enc.index_keys = project_keys(g, Attention::Index, g.concat(keys, 1));
      enc.index_values = g.concat(values, 1);
    }
  }
  return enc;
}

// ---------------------------------------------------------------- decoder

template <typename T>
Var Model<T>::project_keys(Graph<T>& g, Attention which, Var keys) const {
  return g.matmul(g.param(attn(which).wk), keys);
}

template <typename T>
typename Model<T>::Attended Model<T>::attend(Graph<T>& g, Attention which, Var query, Var key_proj,
                                             Var values) const {
  if (!key_proj.valid() || g.shape(key_proj).cols == 0) throw ContractError("attention over zero keys");
  if (g.shape(key_proj).cols != g.shape(values).cols) throw ShapeError("attention keys and values differ in count");
  const auto& p = attn(which);
  const Var q = g.linear(g.param(p.wq), query, g.param(p.b));
  const Var hidden = g.tanh(g.add_col_broadcast(key_proj, q));
  const Var scores = g.transpose(g.matmul(g.param(p.v), hidden));
  const Var weights = g.softmax(scores);
  return {g.matmul(values, weights), weights};
}

template <typename T>
Var Model<T>::combine_op_contexts(Graph<T>& g, Var c_scl, Var c_idx) const {
  return g.tanh(g.linear(g.param(comb_w_), g.concat({c_scl, c_idx}, 0), g.param(comb_b_)));
}

template <typename T>
std::pair<Var, Var> Model<T>::gate_contexts(Graph<T>& g, Var d_t, Var c_op, Var c_ctx, std::optional<T> forced) const {
  const Var lambda = forced ? g.constant(Tensor<T>::scalar(*forced))
                            : g.sigmoid(g.linear(g.param(gate_w_), d_t, g.param(gate_b_)));
  const Var c_t = g.add(g.scale(c_op, g.one_minus(lambda)), g.scale(c_ctx, lambda));
  return {c_t, lambda};
}

template <typename T>
Var Model<T>::copy_attention(Graph<T>& g, const Encoded& enc, Var d_prev, Var c_t) const {
  const Var query = g.concat({d_prev, c_t}, 0);
  return attend(g, Attention::Copy, query, enc.copy_keys, enc.copy_states).weights;
}

template <typename T>
Var Model<T>::generation_gate(Graph<T>& g, Var c_t, Var d_t, Var y_prev_embedding) const {
  Var z = g.linear(g.param(ptr_wc_), c_t, g.param(ptr_b_));
  z = g.add(z, g.matmul(g.param(ptr_wd_), d_t));
  z = g.add(z, g.matmul(g.param(ptr_wy_), y_prev_embedding));
  return g.sigmoid(z);
}

template <typename T>
typename Model<T>::State Model<T>::initial_state(Graph<T>& g, const Encoded& enc) const {
  return {enc.bridge, g.zeros({config_.dec_hidden, 1}), 0};
}

template <typename T>
typename Model<T>::StepOutput Model<T>::step(Graph<T>& g, const Encoded& enc, const State& state,
                                             std::size_t y_prev, const Overrides& overrides) const {
  const std::size_t dh = config_.dec_hidden;
  StepOutput out;
  const Var y_emb = g.embed(emb_word_, input_embedding_id(y_prev));

  // d_t from d_{t-1}, y_{t-1} and c_{t-1}
  const Var d_t = g.gru_cell(g.param(dec_wx_), g.param(dec_wh_), g.param(dec_b_), g.concat({y_emb, state.c_prev}, 0), state.d);

  // operation and record contexts, queried with d_{t-1}
  if (enc.scalar_keys.valid()) {
    auto a = attend(g, Attention::Scalar, state.d, enc.scalar_keys, enc.scalar_values);
    out.c_scl = a.context;
    out.alpha_scl = a.weights;
  } else {
    out.c_scl = g.zeros({dh, 1});
  }
  if (enc.index_keys.valid()) {
    auto a = attend(g, Attention::Index, state.d, enc.index_keys, enc.index_values);
    out.c_idx = a.context;
    out.alpha_idx = a.weights;
  } else {
    out.c_idx = g.zeros({dh, 1});
  }
  const auto ctx = attend(g, Attention::Record, state.d, enc.record_keys, enc.record_states);
  out.c_ctx = ctx.context;
  out.alpha_ctx = ctx.weights;
  out.c_op = combine_op_contexts(g, out.c_scl, out.c_idx);

  std::optional<T> forced_lambda = overrides.lambda;
  if (!forced_lambda && config_.no_gate) forced_lambda = T(0.5);
  std::tie(out.c_t, out.lambda) = gate_contexts(g, d_t, out.c_op, out.c_ctx, forced_lambda);

  const Var hidden = g.tanh(g.linear(g.param(out_w_), g.concat({d_t, out.c_t, y_emb}, 0), g.param(out_b_)));
  out.p_vocab = g.softmax(g.linear(g.param(vocab_w_), hidden, g.param(vocab_b_)));

  out.alpha_new = copy_attention(g, enc, state.d, out.c_t);
  out.p_gen = overrides.p_gen ? g.constant(Tensor<T>::scalar(*overrides.p_gen))
                              : generation_gate(g, out.c_t, d_t, y_emb);

  const Var generated = g.scale(g.pad_rows(out.p_vocab, enc.extended_size), out.p_gen);
  const Var copied = g.scale(g.scatter_add(out.alpha_new, enc.copy_ids, enc.extended_size), g.one_minus(out.p_gen));
  out.dist = g.add(generated, copied);

  for (T v : g.value(out.dist).data) {
    if (!std::isfinite(v)) {
      throw DomainError("non-finite activation in the output distribution at timestep " + std::to_string(state.t + 1));
    }
  }
  out.next = {d_t, out.c_t, state.t + 1};
  return out;
}

template <typename T>
Var Model<T>::example_loss(Graph<T>& g, const ModelInput& input, LossStats* stats) const {
  if (input.target_ids.size() < 2) throw ContractError("target needs at least BOS and EOS");
  const std::size_t hits_before = g.nll_floor_hits();
  const Encoded enc = encode(g, input);
  State state = initial_state(g, enc);
  std::vector<Var> terms;
  for (std::size_t t = 1; t < input.target_ids.size(); ++t) {
    StepOutput s = step(g, enc, state, input.target_ids[t - 1]);
    terms.push_back(g.nll(s.dist, input.target_ids[t]));
    if (stats) {
      const double lam = static_cast<double>(g.scalar(s.lambda));
      stats->lambda_min = std::min(stats->lambda_min, lam);
      stats->lambda_max = std::max(stats->lambda_max, lam);
      stats->lambda_sum += lam;
      ++stats->lambda_count;
    }
    state = s.next;
  }
  if (stats) {
    stats->tokens += terms.size();
    stats->floor_hits += g.nll_floor_hits() - hits_before;
  }
  return sum_terms(g, terms);
}

template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;

}  // namespace opatt
