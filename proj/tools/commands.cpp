#include "commands.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"
#include "opatt/checkpoint.hpp"
#include "opatt/error.hpp"
#include "opatt/eval.hpp"
#include "opatt/manifest.hpp"
#include "opatt/search.hpp"
#include "opatt/synth.hpp"
#include "opatt/trainer.hpp"

namespace opatt::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

void check_written(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string join(const std::vector<std::string>& tokens) {
  std::string s;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i];
  }
  return s;
}

// ---------------------------------------------------------------- preprocess

struct PreprocessArgs {
  fs::path input, out;
  std::size_t min_count = 1;
  bool both_orders = false;
  int row_capacity = Vocab::kDefaultRowCapacity;
};

void cmd_preprocess(const PreprocessArgs& a) {
  const auto start = Clock::now();
  const std::vector<Example> examples = load_dataset(a.input);
  fs::create_directories(a.out);
  const Vocab vocab = build_vocab(examples, a.min_count, a.row_capacity);
  vocab.save(a.out / "vocab.txt", a.out / "fields.txt");
  save_dataset(a.out / "dataset.jsonl", examples);

  const OpConfig ops{a.both_orders, std::nullopt};
  auto enc_out = open_out(a.out / "encoded.jsonl");
  auto ops_out = open_out(a.out / "ops.jsonl");
  for (const auto& ex : examples) {
    const IndexedExample ie = encode_example(ex, vocab);
    json records = json::array();
    for (const auto& r : ie.records) records.push_back({r.row_id, r.field_id, r.value_id, r.copy_id});
    enc_out << json{{"id", ex.id},
                    {"text_ids", ie.text_ids},
                    {"target_ids", ie.target_ids},
                    {"records", records},
                    {"oov_values", ie.oov_values}}
                   .dump()
            << '\n';
    ops_out << results_to_json(ex.id, execute_all(ex.table, ops)) << '\n';
  }
  check_written(enc_out, a.out / "encoded.jsonl");
  check_written(ops_out, a.out / "ops.jsonl");

  RunManifest m;
  m.command = "preprocess";
  m.config = {{"min_count", a.min_count}, {"both_orders", a.both_orders}, {"row_capacity", a.row_capacity}};
  m.inputs = {a.input};
  for (const char* f : {"dataset.jsonl", "vocab.txt", "fields.txt", "encoded.jsonl", "ops.jsonl"}) {
    m.outputs.push_back(a.out / f);
  }
  m.wall_clock_seconds = seconds_since(start);
  write_manifest(a.out / "manifest.json", m);
  std::cerr << "preprocessed " << examples.size() << " examples, vocabulary " << vocab.size() << " words, "
            << vocab.field_count() - 1 << " fields\n";
}

}  // namespace

Preprocessed load_preprocessed(const fs::path& dir) {
  const json manifest = read_json_file(dir / "manifest.json");
  const int capacity = manifest.at("config").value("row_capacity", Vocab::kDefaultRowCapacity);
  Preprocessed p{load_dataset(dir / "dataset.jsonl"), {}, Vocab::load(dir / "vocab.txt", dir / "fields.txt", capacity),
                 manifest.at("config").value("both_orders", false)};
  std::ifstream in(dir / "ops.jsonl");
  if (!in) throw IoError("cannot open " + (dir / "ops.jsonl").string());
  std::string line;
  std::size_t i = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto [id, results] = results_from_json(line);
    if (i >= p.examples.size() || id != p.examples[i].id) {
      throw DataError("ops.jsonl line " + std::to_string(i + 1) + " does not match dataset.jsonl");
    }
    p.results.push_back(std::move(results));
    ++i;
  }
  if (p.results.size() != p.examples.size()) {
    throw DataError("ops.jsonl has " + std::to_string(p.results.size()) + " entries for " +
                    std::to_string(p.examples.size()) + " examples");
  }
  return p;
}

namespace {

// ---------------------------------------------------------------- train

struct TrainArgs {
  fs::path data, config, out, loss_log;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::optional<int> threads;
  bool no_argmax = false, no_quant = false, no_gate = false, no_ops = false, ops_as_records = false;
};

void cmd_train(const TrainArgs& a) {
  const auto start = Clock::now();
  TrainConfig config;
  if (!a.config.empty()) {
    try {
      config = read_json_file(a.config).get<TrainConfig>();
    } catch (const json::exception& e) {
      throw ContractError("config " + a.config.string() + ": " + e.what());
    }
  }
  if (a.seed) config.seed = *a.seed;
  if (a.epochs) config.epochs = *a.epochs;
  if (a.threads) config.threads = *a.threads;
  config.model.no_argmax |= a.no_argmax;
  config.model.no_quantization |= a.no_quant;
  config.model.no_gate |= a.no_gate;
  config.model.no_ops |= a.no_ops;
  config.model.ops_as_records |= a.ops_as_records;

  const Preprocessed data = load_preprocessed(a.data);
  if (data.vocab.row_capacity() != config.model.row_capacity) {
    throw ContractError("config row_capacity " + std::to_string(config.model.row_capacity) +
                        " differs from the preprocessed data's " + std::to_string(data.vocab.row_capacity()));
  }
  config.both_orders = data.both_orders;
  config.validate();
  if (data.examples.empty()) throw ContractError("training set is empty");

  const auto inputs = prepare_inputs(data.examples, data.results, data.vocab, config.max_text_len);
  Model<float> model(config.model, data.vocab.size(), data.vocab.field_count());

  const fs::path log_path = a.loss_log.empty() ? fs::path(a.out.string() + ".loss.jsonl") : a.loss_log;
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  auto log = open_out(log_path);
  train(model, inputs, config, [&](const EpochLog& e, const Model<float>& m) {
    log << epoch_log_json(e).dump() << '\n';
    check_written(log, log_path);
    save_checkpoint(a.out, m, data.vocab, config);
    std::cerr << "epoch " << e.epoch << " loss " << e.loss << " token_nll " << e.token_nll << '\n';
    return true;
  });

  RunManifest m;
  m.command = "train";
  m.config = config;
  m.seed = config.seed;
  m.inputs = {a.data};
  if (!a.config.empty()) m.inputs.push_back(a.config);
  m.outputs = {a.out, log_path};
  m.wall_clock_seconds = seconds_since(start);
  write_manifest(a.out.string() + ".manifest.json", m);
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  fs::path model, input, output;
  std::size_t beam = 5;
  std::size_t max_len = 30;
  double length_norm = 1.0;
};

std::vector<std::vector<std::string>> generate_all(const Checkpoint& ck, const std::vector<Example>& examples,
                                                   const SearchConfig& search) {
  const OpConfig ops{ck.config.both_orders, std::nullopt};
  const auto inputs = prepare_inputs(examples, ck.vocab, ops);
  std::vector<std::vector<std::string>> out(inputs.size());
  std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    try {
      const Decoded d = decode(ck.model, inputs[i], search);
      out[i] = decode_ids(d.tokens, ck.vocab, inputs[i].oov_values);
    } catch (...) {
#pragma omp critical
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
  return out;
}

void cmd_generate(const GenerateArgs& a) {
  const auto start = Clock::now();
  const Checkpoint ck = load_checkpoint(a.model);
  const auto examples = load_dataset(a.input, false);
  const SearchConfig search{a.beam, a.max_len, a.length_norm};
  const auto texts = generate_all(ck, examples, search);
  if (a.output.empty()) {
    for (const auto& t : texts) std::cout << join(t) << '\n';
    return;
  }
  auto out = open_out(a.output);
  for (const auto& t : texts) out << join(t) << '\n';
  check_written(out, a.output);
  RunManifest m;
  m.command = "generate";
  m.config = {{"beam", a.beam}, {"max_len", a.max_len}, {"length_norm", a.length_norm}};
  m.seed = ck.config.seed;
  m.inputs = {a.model, a.input};
  m.outputs = {a.output};
  m.wall_clock_seconds = seconds_since(start);
  write_manifest(a.output.string() + ".manifest.json", m);
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  fs::path candidates, references, out;
  bool add_one = false;
  std::string checkpoint;
  std::optional<std::size_t> beam;
};

void cmd_evaluate(const EvaluateArgs& a) {
  const auto start = Clock::now();
  std::ifstream in(a.candidates);
  if (!in) throw IoError("cannot open " + a.candidates.string());
  std::vector<Tokens> cands;
  std::string line;
  while (std::getline(in, line)) cands.push_back(tokenize(line));
  const auto refs = load_dataset(a.references);
  if (cands.size() != refs.size()) {
    throw ContractError("alignment mismatch: " + std::to_string(cands.size()) + " candidates, " +
                        std::to_string(refs.size()) + " references");
  }

  EvalReport report;
  std::vector<Tokens> ref_tokens;
  std::vector<RecordTable> tables;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    ref_tokens.push_back(refs[i].text);
    tables.push_back(refs[i].table);
    report.examples.push_back({refs[i].id, cands[i], refs[i].text});
  }
  report.bleu4 = refs.empty() ? 0.0
                              : bleu4(cands, ref_tokens, a.add_one ? BleuSmoothing::AddOne : BleuSmoothing::None);
  try {
    if (!refs.empty()) report.winner_accuracy = winner_accuracy(cands, tables);
  } catch (const DataError&) {
    // tables without Team/Points: no winner diagnostic
  }
  report.checkpoint = a.checkpoint;
  report.beam = a.beam;
  const std::string text = report_to_json(report).dump(2);
  if (a.out.empty()) {
    std::cout << text << '\n';
    return;
  }
  auto out = open_out(a.out);
  out << text << '\n';
  check_written(out, a.out);
  RunManifest m;
  m.command = "evaluate";
  m.config = {{"smoothing", a.add_one ? "add-one" : "none"}};
  m.inputs = {a.candidates, a.references};
  m.outputs = {a.out};
  m.wall_clock_seconds = seconds_since(start);
  write_manifest(a.out.string() + ".manifest.json", m);
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  fs::path model, input, out;
  std::size_t index = 0;
  std::size_t max_len = 30;
  double from = -30, to = 30, step = 1;
};

void emit(const InspectArgs& a, const std::string& command, const std::string& csv, json config) {
  if (a.out.empty()) {
    std::cout << csv;
    return;
  }
  auto out = open_out(a.out);
  out << csv;
  check_written(out, a.out);
  RunManifest m;
  m.command = command;
  m.config = std::move(config);
  m.inputs = {a.model};
  if (!a.input.empty()) m.inputs.push_back(a.input);
  m.outputs = {a.out};
  write_manifest(a.out.string() + ".manifest.json", m);
}

void cmd_inspect_gates(const InspectArgs& a) {
  const Checkpoint ck = load_checkpoint(a.model);
  const auto examples = load_dataset(a.input, false);
  if (a.index >= examples.size()) {
    throw ContractError("example index " + std::to_string(a.index) + " out of range for " +
                        std::to_string(examples.size()) + " examples");
  }
  const auto inputs = prepare_inputs({examples[a.index]}, ck.vocab, OpConfig{ck.config.both_orders, std::nullopt});
  const auto steps = inspect_gates(ck.model, inputs.front(), ck.vocab, a.max_len);
  emit(a, "inspect gates", gates_csv(steps), {{"index", a.index}, {"max_len", a.max_len}});
}

void cmd_inspect_quant(const InspectArgs& a) {
  if (!(a.step > 0) || a.to < a.from) throw ContractError("value sweep needs step > 0 and from <= to");
  const Checkpoint ck = load_checkpoint(a.model);
  std::vector<double> values;
  for (std::size_t i = 0;; ++i) {
    const double v = a.from + static_cast<double>(i) * a.step;
    if (v > a.to + 1e-9 * a.step) break;
    values.push_back(v);
  }
  const auto weights = inspect_quantization(ck.model, values);
  emit(a, "inspect quant", quantization_csv(values, weights), {{"from", a.from}, {"to", a.to}, {"step", a.step}});
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  SynthConfig config;
  fs::path out, heldout_out;
};

void cmd_synth(const SynthArgs& a) {
  const auto start = Clock::now();
  if (a.config.heldout > 0 && a.heldout_out.empty()) throw ContractError("--heldout needs --heldout-out");
  const SynthCorpus corpus = synthesize(a.config);
  save_dataset(a.out, corpus.examples);
  RunManifest m;
  m.command = "synth";
  m.config = {{"count", a.config.count}, {"heldout", a.config.heldout}};
  m.seed = a.config.seed;
  m.outputs = {a.out};
  if (a.config.heldout > 0) {
    save_dataset(a.heldout_out, corpus.heldout);
    m.outputs.push_back(a.heldout_out);
  }
  m.wall_clock_seconds = seconds_since(start);
  write_manifest(a.out.string() + ".manifest.json", m);
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Operation-guided data-to-text generation"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Build vocabularies, encoded examples and operation results");
  c_pre->add_option("--input", pre.input, "Raw JSONL dataset")->required();
  c_pre->add_option("--out", pre.out, "Output directory")->required();
  c_pre->add_option("--min-count", pre.min_count, "Minimum token count for the vocabulary");
  c_pre->add_flag("--both-orders", pre.both_orders, "Emit MINUS in both argument orders");
  c_pre->add_option("--row-capacity", pre.row_capacity, "Largest row index");

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a model");
  c_train->add_option("--data", tr.data, "Preprocessed directory")->required();
  c_train->add_option("--config", tr.config, "Training config JSON");
  c_train->add_option("--out", tr.out, "Checkpoint path (rewritten every epoch)")->required();
  c_train->add_option("--loss-log", tr.loss_log, "Loss log path (default <out>.loss.jsonl)");
  c_train->add_option("--seed", tr.seed);
  c_train->add_option("--epochs", tr.epochs);
  c_train->add_option("--threads", tr.threads);
  c_train->add_flag("--no-argmax", tr.no_argmax);
  c_train->add_flag("--no-quant", tr.no_quant);
  c_train->add_flag("--no-gate", tr.no_gate);
  c_train->add_flag("--no-ops", tr.no_ops);
  c_train->add_flag("--ops-as-records", tr.ops_as_records, "Feed results to the record encoder instead");

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "Decode texts for a JSONL input");
  c_gen->add_option("--model", gen.model, "Checkpoint")->required();
  c_gen->add_option("--input", gen.input, "JSONL input")->required();
  c_gen->add_option("--output", gen.output, "Output file (default standard output)");
  c_gen->add_option("--beam", gen.beam)->check(CLI::PositiveNumber);
  c_gen->add_option("--max-len", gen.max_len)->check(CLI::PositiveNumber);
  c_gen->add_option("--length-norm", gen.length_norm);

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "Score generated texts against references");
  c_eval->add_option("--candidates", ev.candidates, "One generated text per line")->required();
  c_eval->add_option("--references", ev.references, "JSONL dataset with reference texts")->required();
  c_eval->add_option("--out", ev.out, "Report path (default standard output)");
  c_eval->add_flag("--add-one", ev.add_one, "Add-one smoothing for n >= 2");
  c_eval->add_option("--checkpoint", ev.checkpoint, "Recorded in the report");
  c_eval->add_option("--beam", ev.beam, "Recorded in the report");

  InspectArgs ins;
  auto* c_ins = app.add_subcommand("inspect", "Dump gate or quantization weights as CSV");
  c_ins->require_subcommand(1);
  auto* c_gates = c_ins->add_subcommand("gates", "Per-step lambda and p_gen of a greedy decode");
  c_gates->add_option("--model", ins.model)->required();
  c_gates->add_option("--input", ins.input)->required();
  c_gates->add_option("--index", ins.index, "Example index in the input");
  c_gates->add_option("--max-len", ins.max_len)->check(CLI::PositiveNumber);
  c_gates->add_option("--out", ins.out);
  auto* c_quant = c_ins->add_subcommand("quant", "Quantization weights over a value sweep");
  c_quant->add_option("--model", ins.model)->required();
  c_quant->add_option("--from", ins.from);
  c_quant->add_option("--to", ins.to);
  c_quant->add_option("--step", ins.step);
  c_quant->add_option("--out", ins.out);

  SynthArgs sy;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic score-headline corpus");
  c_synth->add_option("--count", sy.config.count);
  c_synth->add_option("--seed", sy.config.seed);
  c_synth->add_option("--out", sy.out)->required();
  c_synth->add_option("--heldout", sy.config.heldout, "Examples with unseen score pairs");
  c_synth->add_option("--heldout-out", sy.heldout_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*c_pre) cmd_preprocess(pre);
    else if (*c_train) cmd_train(tr);
    else if (*c_gen) cmd_generate(gen);
    else if (*c_eval) cmd_evaluate(ev);
    else if (*c_gates) cmd_inspect_gates(ins);
    else if (*c_quant) cmd_inspect_quant(ins);
    else if (*c_synth) cmd_synth(sy);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace opatt::cli
