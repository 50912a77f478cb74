// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any fails. `acceptance 5 7` runs a subset.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "opatt/error.hpp"
#include "opatt/eval.hpp"
#include "opatt/grad_check.hpp"
#include "opatt/op_engine.hpp"
#include "opatt/search.hpp"
#include "opatt/synth.hpp"
#include "opatt/trainer.hpp"

using namespace opatt;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

// ---- pinned tolerances and budgets
constexpr double kGradTol = 1e-6;
constexpr double kGradSeconds = 60.0;
constexpr double kSumTol = 1e-5;
constexpr std::size_t kStepEvals = 10000;
constexpr int kOracleTables = 1000;
constexpr double kMemoNll = 0.05;
constexpr double kMemoExact = 0.90;
constexpr std::size_t kMemoMaxEpochs = 500;
constexpr double kMemoSeconds = 600.0;
constexpr double kWinnerAcc = 0.90;
constexpr double kBleuGoldenTol = 1e-9;
const std::uint64_t kSeeds[] = {1, 2, 3};

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

template <typename T>
T median3(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

ModelConfig dims(std::size_t word, std::size_t row, std::size_t hidden, int capacity) {
  ModelConfig c;
  c.word_dim = word;
  c.row_dim = row;
  c.dec_hidden = hidden;
  c.enc_hidden = hidden / 2;
  c.attn_hidden = hidden;
  c.row_capacity = capacity;
  return c;
}

template <typename T>
void randomize(Model<T>& m, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& p : m.params()) {
    for (auto& v : p.value.data) v = static_cast<T>(d(rng));
  }
}

Tokens decoded_tokens(const Model<float>& model, const ModelInput& in, const Vocab& vocab, const SearchConfig& s) {
  return decode_ids(decode(model, in, s).tokens, vocab, in.oov_values);
}

// ---------------------------------------------------------------- 1

Outcome gradient_fidelity() {
  const auto start = Clock::now();
  const RecordTable table({{1, "Team", "Heat", std::nullopt},
                           {1, "Points", "94", 94.0},
                           {2, "Team", "Hawks", std::nullopt},
                           {2, "Points", "95", 95.0}});
  const Example ex{"tiny", table, tokenize("Hawks edges Heat 95")};
  // 16 filler words plus the specials: vocabulary of exactly 20
  std::vector<std::string> words = {"hawks", "edges", "heat"};
  for (int i = 0; words.size() < 16; ++i) words.push_back("f" + std::to_string(i));
  const Vocab vocab(words, {"Points", "Team"}, 4);
  const auto results = execute_all(table, {true, std::nullopt});
  const ModelInput in = make_model_input(encode_example(ex, vocab), results, vocab);

  std::size_t minus = 0, argmax = 0;
  for (const auto& r : results) (r.is_scalar() ? minus : argmax)++;
  if (vocab.size() != 20 || in.records.size() != 4 || minus != 2 || argmax != 1 || in.target_ids.size() != 6) {
    return {false, "fixture does not have the required shape"};
  }

  Model<double> m(dims(8, 4, 16, 4), vocab.size(), vocab.field_count());
  randomize(m, 2, 0.3);
  const auto r = grad_check(m.params(), [&](Graph<double>& g) { return m.example_loss(g, in); });
  const double secs = seconds_since(start);
  return {r.max_rel_error < kGradTol && secs < kGradSeconds,
          fmt("max rel error %.3g at %s[%zu] over %zu entries, %.1f s", r.max_rel_error, r.worst_param.c_str(),
              r.worst_index, r.entries, secs)};
}

// ---------------------------------------------------------------- 2

Example random_table(std::mt19937_64& rng, int id) {
  std::uniform_int_distribution<int> rows(1, 6), cols(1, 4), value(-1000, 1000), coin(0, 9);
  const int n_rows = rows(rng), n_cols = cols(rng);
  std::vector<Record> records;
  for (int r = 1; r <= n_rows; ++r) {
    records.push_back({r, "Team", "t" + std::to_string(value(rng) % 7), std::nullopt});
    for (int c = 0; c < n_cols; ++c) {
      if (coin(rng) == 0) {
        records.push_back({r, "C" + std::to_string(c), "n/a", std::nullopt});
        continue;
      }
      const int v = value(rng);
      records.push_back({r, "C" + std::to_string(c), std::to_string(v), static_cast<double>(v)});
    }
  }
  return {"r" + std::to_string(id), RecordTable(std::move(records)), tokenize("t1 wins")};
}

Outcome distribution_invariants() {
  std::mt19937_64 rng(17);
  std::vector<Example> tables;
  for (int i = 0; i < 200; ++i) tables.push_back(random_table(rng, i));
  const Vocab vocab = build_vocab(tables, 1, 8);
  const auto inputs = prepare_inputs(tables, vocab);

  std::size_t evals = 0, violations = 0;
  double worst = 0.0;
  auto check_sum = [&](const Tensor<float>& t) {
    double s = 0.0;
    for (float v : t.data) {
      if (!(v >= 0.0f)) ++violations;
      s += v;
    }
    worst = std::max(worst, std::abs(s - 1.0));
    if (!(std::abs(s - 1.0) <= kSumTol)) ++violations;
  };
  auto check_open = [&](float v) {
    if (!(v > 0.0f && v < 1.0f)) ++violations;
  };

  const bool flags[][3] = {{false, false, false}, {true, false, false}, {false, true, false}, {false, false, true}};
  for (std::size_t trial = 0; evals < kStepEvals; ++trial) {
    ModelConfig c = dims(8, 4, 16, 8);
    c.no_argmax = flags[trial % 4][0];
    c.no_quantization = flags[trial % 4][1];
    c.ops_as_records = flags[trial % 4][2];
    Model<float> m(c, vocab.size(), vocab.field_count());
    m.init(trial);
    const ModelInput& in = inputs[trial % inputs.size()];
    Graph<float> g(m.params());
    const auto enc = m.encode(g, in);
    for (const auto& q : enc.quantized) {
      if (q.weights.valid()) check_sum(g.value(q.weights));
    }
    auto state = m.initial_state(g, enc);
    std::uniform_int_distribution<std::size_t> token(Vocab::kSpecials, in.extended_size - 1);
    for (int t = 0; t < 10 && evals < kStepEvals; ++t, ++evals) {
      const auto o = m.step(g, enc, state, t == 0 ? Vocab::kBos : token(rng));
      check_sum(g.value(o.dist));
      check_sum(g.value(o.p_vocab));
      check_sum(g.value(o.alpha_ctx));
      check_sum(g.value(o.alpha_new));
      if (o.alpha_scl.valid()) check_sum(g.value(o.alpha_scl));
      if (o.alpha_idx.valid()) check_sum(g.value(o.alpha_idx));
      check_open(g.scalar(o.lambda));
      check_open(g.scalar(o.p_gen));
      state = o.next;
    }
  }
  return {violations == 0, fmt("%zu step evaluations, %zu violations, worst |sum - 1| = %.3g", evals, violations, worst)};
}

// ---------------------------------------------------------------- 3

// Recomputes every result from a row x column grid of the table.
std::vector<OperationResult> grid_oracle(const RecordTable& t, bool both) {
  std::vector<std::string> columns;
  for (const auto& r : t.records()) {
    if (std::find(columns.begin(), columns.end(), r.field) == columns.end()) columns.push_back(r.field);
  }
  std::vector<OperationResult> out;
  for (const auto& col : columns) {
    std::vector<std::optional<double>> cell(static_cast<std::size_t>(t.rows()) + 1);
    for (const auto& r : t.records()) {
      if (r.field == col) cell[static_cast<std::size_t>(r.row)] = r.numeric;
    }
    std::vector<int> rows;
    for (int r = 1; r <= t.rows(); ++r) {
      if (cell[static_cast<std::size_t>(r)]) rows.push_back(r);
    }
    if (rows.empty()) continue;
    for (std::size_t a = 0; a < rows.size(); ++a) {
      for (std::size_t b = a + 1; b < rows.size(); ++b) {
        const double x = *cell[static_cast<std::size_t>(rows[a])], y = *cell[static_cast<std::size_t>(rows[b])];
        out.push_back({{OpKind::Minus, col, {rows[a], rows[b]}}, ScalarValue{x - y}});
        if (both) out.push_back({{OpKind::Minus, col, {rows[b], rows[a]}}, ScalarValue{y - x}});
      }
    }
    if (rows.size() < 2) continue;
    // ties go to the smallest row index
    double top = -INFINITY;
    for (int r : rows) top = std::max(top, *cell[static_cast<std::size_t>(r)]);
    int winner = 0;
    for (int r : rows) {
      if (*cell[static_cast<std::size_t>(r)] == top) {
        winner = r;
        break;
      }
    }
    out.push_back({{OpKind::Argmax, col, {}}, IndexValue{winner}});
  }
  return out;
}

Outcome operation_oracle() {
  std::mt19937_64 rng(3);
  int mismatches = 0, ties = 0, antisym = 0;
  for (int trial = 0; trial < kOracleTables; ++trial) {
    std::uniform_int_distribution<int> rows(1, 8), cols(1, 5), value(-5, 5), coin(0, 7);
    const int n_rows = rows(rng), n_cols = cols(rng);
    std::vector<Record> records;
    for (int r = 1; r <= n_rows; ++r) {
      records.push_back({r, "Name", "p" + std::to_string(r), std::nullopt});
      for (int c = 0; c < n_cols; ++c) {
        if (coin(rng) == 0) continue;  // missing cell
        const int v = value(rng);
        records.push_back({r, "C" + std::to_string(c), std::to_string(v), static_cast<double>(v)});
      }
    }
    const RecordTable t(std::move(records));
    for (bool both : {false, true}) {
      const auto got = execute_all(t, {both, std::nullopt});
      if (got != grid_oracle(t, both)) ++mismatches;
      if (!both) continue;
      std::map<std::tuple<std::string, int, int>, double> minus;
      for (const auto& r : got) {
        if (r.is_scalar()) minus[{r.op.column, r.op.args[0], r.op.args[1]}] = r.scalar();
      }
      for (const auto& [k, v] : minus) {
        const auto it = minus.find({std::get<0>(k), std::get<2>(k), std::get<1>(k)});
        if (it == minus.end() || it->second != -v) ++antisym;
      }
    }
    for (const auto& col : numeric_columns(t)) {
      std::multiset<double> vals;
      for (int r : col.rows) vals.insert(*t.find(r, col.column)->numeric);
      if (vals.size() >= 2 && vals.count(*vals.rbegin()) > 1) ++ties;
    }
  }
  return {mismatches == 0 && antisym == 0,
          fmt("%d tables, %d mismatches, %d antisymmetry failures, %d columns with tied maxima", kOracleTables,
              mismatches, antisym, ties)};
}

// ---------------------------------------------------------------- 4

Outcome mixture_endpoints() {
  SynthConfig sc;
  sc.count = 20;
  const auto corpus = synthesize(sc).examples;
  const Vocab vocab = build_vocab(std::vector<Example>(corpus.begin(), corpus.begin() + 10), 1, 8);  // leaves OOV values
  const auto inputs = prepare_inputs(corpus, vocab);
  ModelConfig c = dims(16, 4, 32, 8);
  Model<float> m(c, vocab.size(), vocab.field_count());
  m.init(4);
  ModelConfig pinned_config = c;
  pinned_config.no_gate = true;
  Model<float> pinned(pinned_config, vocab.size(), vocab.field_count());
  pinned.params() = m.params().cast<float>();

  std::size_t steps = 0, bad_vocab = 0, bad_copy = 0, bad_gate = 0;
  for (const auto& in : inputs) {
    Graph<float> g(m.params()), h(pinned.params());
    const auto enc = m.encode(g, in);
    const auto enc_p = pinned.encode(h, in);
    auto s = m.initial_state(g, enc);
    auto sp = pinned.initial_state(h, enc_p);
    for (std::size_t t = 1; t < in.target_ids.size(); ++t, ++steps) {
      const std::size_t y = in.target_ids[t - 1];
      const auto pv = m.step(g, enc, s, y, {std::nullopt, 1.0f});
      std::vector<float> want(in.extended_size, 0.0f);
      std::copy(g.value(pv.p_vocab).data.begin(), g.value(pv.p_vocab).data.end(), want.begin());
      if (g.value(pv.dist).data != want) ++bad_vocab;

      const auto pc = m.step(g, enc, s, y, {std::nullopt, 0.0f});
      std::fill(want.begin(), want.end(), 0.0f);
      const auto& alpha = g.value(pc.alpha_new).data;
      for (std::size_t j = 0; j < alpha.size(); ++j) want[in.copy_ids[j]] += alpha[j];
      if (g.value(pc.dist).data != want) ++bad_copy;

      const auto half = m.step(g, enc, s, y, {0.5f, std::nullopt});
      const auto nogate = pinned.step(h, enc_p, sp, y);
      if (g.value(half.dist).data != h.value(nogate.dist).data) ++bad_gate;
      s = half.next;
      sp = nogate.next;
    }
  }
  return {bad_vocab + bad_copy + bad_gate == 0,
          fmt("%zu steps: %zu vocab-endpoint, %zu copy-endpoint, %zu gate mismatches", steps, bad_vocab, bad_copy,
              bad_gate)};
}

// ---------------------------------------------------------------- 5

struct MemoRun {
  double nll = 0.0;
  double exact = 0.0;
  std::size_t epochs = 0;
  double seconds = 0.0;
};

MemoRun memorize(std::uint64_t seed) {
  const auto start = Clock::now();
  SynthConfig sc;
  sc.count = 64;
  sc.seed = 7;
  const auto corpus = synthesize(sc).examples;
  const Vocab vocab = build_vocab(corpus, 1, 8);
  const auto inputs = prepare_inputs(corpus, vocab);

  TrainConfig tc;
  tc.model = dims(64, 16, 128, 8);
  tc.epochs = kMemoMaxEpochs;
  tc.batch_size = 8;
  tc.seed = seed;
  Model<float> model(tc.model, vocab.size(), vocab.field_count());
  MemoRun run;
  train(model, inputs, tc, [&](const EpochLog& log, const Model<float>& m) {
    run.epochs = log.epoch;
    if (log.token_nll >= kMemoNll) return true;
    const BatchStats s = evaluate_loss(m, inputs);
    return s.loss_sum / static_cast<double>(s.tokens) >= kMemoNll;
  });
  const BatchStats s = evaluate_loss(model, inputs);
  run.nll = s.loss_sum / static_cast<double>(s.tokens);

  std::vector<int> hit(inputs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    hit[i] = decoded_tokens(model, inputs[i], vocab, {5, 30, 1.0}) == corpus[i].text;
  }
  run.exact = static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(hit.size());
  run.seconds = seconds_since(start);
  return run;
}

Outcome memorization() {
  std::vector<double> nll, exact, secs;
  std::string per_seed;
  for (std::uint64_t seed : kSeeds) {
    const MemoRun r = memorize(seed);
    nll.push_back(r.nll);
    exact.push_back(r.exact);
    secs.push_back(r.seconds);
    per_seed += fmt(" [seed %llu: nll %.4f, exact %.3f, %zu epochs, %.0f s]", static_cast<unsigned long long>(seed),
                    r.nll, r.exact, r.epochs, r.seconds);
  }
  const double n = median3(nll), e = median3(exact), t = median3(secs);
  return {n < kMemoNll && e >= kMemoExact && t <= kMemoSeconds,
          fmt("median nll %.4f, exact %.3f, %.0f s;", n, e, t) + per_seed};
}

// ---------------------------------------------------------------- 6, 7, 8

struct Generalization {
  std::vector<Example> heldout;
  Vocab vocab{{}, {}};
  std::vector<ModelInput> heldout_inputs;
  std::vector<Model<float>> full, no_ops;
  std::vector<double> full_acc, no_ops_acc;
};

TrainConfig generalization_config(std::uint64_t seed, bool no_ops) {
  TrainConfig tc;
  tc.model = dims(32, 8, 64, 8);
  tc.model.no_ops = no_ops;
  tc.epochs = 12;
  tc.batch_size = 16;
  tc.seed = seed;
  return tc;
}

double winner_accuracy_of(const Model<float>& model, const Generalization& g) {
  std::vector<Tokens> outs(g.heldout_inputs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < outs.size(); ++i) outs[i] = decoded_tokens(model, g.heldout_inputs[i], g.vocab, {5, 30, 1.0});
  std::vector<RecordTable> tables;
  for (const auto& e : g.heldout) tables.push_back(e.table);
  return winner_accuracy(outs, tables);
}

Generalization& generalization() {
  static Generalization g = [] {
    Generalization out;
    SynthConfig sc;
    sc.count = 2000;
    sc.heldout = 200;
    sc.seed = 11;
    const SynthCorpus corpus = synthesize(sc);
    out.heldout = corpus.heldout;
    out.vocab = build_vocab(corpus.examples, 1, 8);
    const auto train_inputs = prepare_inputs(corpus.examples, out.vocab);
    out.heldout_inputs = prepare_inputs(out.heldout, out.vocab);
    for (std::uint64_t seed : kSeeds) {
      for (bool no_ops : {false, true}) {
        const TrainConfig tc = generalization_config(seed, no_ops);
        Model<float> m(tc.model, out.vocab.size(), out.vocab.field_count());
        train(m, train_inputs, tc);
        const double acc = winner_accuracy_of(m, out);
        (no_ops ? out.no_ops : out.full).push_back(std::move(m));
        (no_ops ? out.no_ops_acc : out.full_acc).push_back(acc);
      }
    }
    return out;
  }();
  return g;
}

Outcome inferred_facts() {
  const auto start = Clock::now();
  const Generalization& g = generalization();
  const double full = median3(g.full_acc), ablated = median3(g.no_ops_acc);
  std::string seeds;
  for (std::size_t i = 0; i < g.full_acc.size(); ++i) seeds += fmt(" %.3f/%.3f", g.full_acc[i], g.no_ops_acc[i]);
  return {full >= kWinnerAcc && full > ablated,
          fmt("median winner accuracy full %.3f vs no-ops %.3f (per seed full/no-ops:%s), %.0f s", full, ablated,
              seeds.c_str(), seconds_since(start))};
}

Outcome quantization_contiguity() {
  const Generalization& g = generalization();
  std::vector<double> values;
  for (int v = -30; v <= 30; ++v) values.push_back(v);
  std::size_t broken = 0;
  std::string regions;
  for (std::size_t s = 0; s < g.full.size(); ++s) {
    const auto w = inspect_quantization(g.full[s], values);
    std::vector<std::size_t> arg;
    for (const auto& row : w) arg.push_back(static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
    std::set<std::size_t> closed;
    for (std::size_t i = 0; i < arg.size(); ++i) {
      if (i > 0 && arg[i] != arg[i - 1]) closed.insert(arg[i - 1]);
      if (closed.count(arg[i])) {
        ++broken;
        break;
      }
    }
    std::set<std::size_t> used(arg.begin(), arg.end());
    regions += fmt(" seed %zu: %zu bins used;", s + 1, used.size());
  }
  return {broken == 0, fmt("%zu models with a split argmax region;", broken) + regions};
}

// First-order Markov model over {0, 1, EOS}.
struct ToyMarkov {
  std::vector<double> start;
  std::vector<std::vector<double>> trans;
  struct State {
    int last = -1;
  };
  State initial() const { return {}; }
  std::vector<double> log_probs(State& s) const { return s.last < 0 ? start : trans[static_cast<std::size_t>(s.last)]; }
  State child(const State&, std::size_t k) const { return {static_cast<int>(k)}; }
  std::size_t eos() const { return 2; }
};

double toy_exhaustive(const ToyMarkov& m, std::size_t max_len) {
  double best = -INFINITY;
  std::function<void(int, double, std::size_t)> walk = [&](int last, double lp, std::size_t len) {
    ToyMarkov::State s{last};
    const auto p = m.log_probs(s);
    best = std::max(best, lp + p[2]);
    if (len + 1 >= max_len) return;
    for (int k = 0; k < 2; ++k) walk(k, lp + p[static_cast<std::size_t>(k)], len + 1);
  };
  walk(-1, 0.0, 0);
  return best;
}

Outcome beam_dominance() {
  const Generalization& g = generalization();
  std::size_t compared = 0, violations = 0;
  for (const auto& model : g.full) {
    std::vector<int> bad(g.heldout_inputs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < g.heldout_inputs.size(); ++i) {
      const Decoded wide = decode(model, g.heldout_inputs[i], {5, 30, 0.0});
      const Decoded greedy = decode(model, g.heldout_inputs[i], {1, 30, 0.0});
      bad[i] = wide.logprob < greedy.logprob;
    }
    compared += bad.size();
    violations += static_cast<std::size_t>(std::count(bad.begin(), bad.end(), 1));
  }

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  auto row = [&] {
    std::vector<double> p(3);
    double z = 0.0;
    for (double& x : p) z += (x = u(rng));
    for (double& x : p) x = std::log(x / z);
    return p;
  };
  int toy_bad = 0;
  const int toys = 500;
  for (int t = 0; t < toys; ++t) {
    const ToyMarkov m{row(), {row(), row()}};
    const Decoded d = beam_search(m, {5, 6, 0.0});
    if (!d.finished || std::abs(d.logprob - toy_exhaustive(m, 6)) > 1e-12) ++toy_bad;
  }
  return {violations == 0 && toy_bad == 0,
          fmt("%zu dev decodes, %zu with beam 5 below greedy; %d/%d toy models differ from exhaustive search", compared,
              violations, toy_bad, toys)};
}

// ---------------------------------------------------------------- 9

Outcome bleu_self_tests() {
  const std::vector<Tokens> x = {tokenize("Hawks edges Heat 95 - 94"), tokenize("Celtics routs Lakers 120 - 91")};
  const double self = bleu4(x, x);
  // matches per order 8/8, 6/7, 5/6, 4/5; candidate 8 tokens, reference 9
  const std::vector<Tokens> ref = {tokenize("the quick brown fox jumps over the lazy dog")};
  const std::vector<Tokens> cand = {tokenize("the quick brown fox jumps over the dog")};
  const double golden =
      100.0 * std::exp(1.0 - 9.0 / 8.0) * std::exp((std::log(6.0 / 7) + std::log(5.0 / 6) + std::log(4.0 / 5)) / 4.0);
  const double got = bleu4(cand, ref);

  std::mt19937_64 rng(5);
  std::vector<Tokens> cands, refs;
  for (int i = 0; i < 50; ++i) {
    Tokens c, r;
    for (int k = 0; k < 10; ++k) {
      c.push_back("w" + std::to_string(rng() % 5));
      r.push_back("w" + std::to_string(rng() % 5));
    }
    cands.push_back(c);
    refs.push_back(r);
  }
  const double base = bleu4(cands, refs);
  double perm_dev = 0.0;
  std::vector<std::size_t> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  for (int t = 0; t < 20; ++t) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Tokens> pc, pr;
    for (std::size_t i : order) {
      pc.push_back(cands[i]);
      pr.push_back(refs[i]);
    }
    perm_dev = std::max(perm_dev, std::abs(bleu4(pc, pr) - base));
  }
  return {self == 100.0 && std::abs(got - golden) < kBleuGoldenTol && perm_dev < 1e-9,
          fmt("self %.6f, golden %.12f vs %.12f, permutation deviation %.3g", self, got, golden, perm_dev)};
}

// ---------------------------------------------------------------- 10

int shell(const std::string& cmd) {
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const fs::path dir = fs::temp_directory_path() / ("opatt_accept_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string cli = OPATT_CLI;
  const std::string quiet = " >/dev/null 2>&1";
  std::ofstream(dir / "config.json") << R"({"epochs": 3, "batch_size": 8, "seed": 21, "model": {"word_dim": 16,
    "row_dim": 4, "enc_hidden": 16, "dec_hidden": 32, "attn_hidden": 32, "row_capacity": 8}})";
  int rc = shell(cli + " synth --count 48 --seed 5 --out " + (dir / "c.jsonl").string() + quiet);
  rc |= shell(cli + " preprocess --row-capacity 8 --input " + (dir / "c.jsonl").string() + " --out " +
              (dir / "prep").string() + quiet);
  for (const char* name : {"a.ckpt", "b.ckpt"}) {
    rc |= shell(cli + " train --data " + (dir / "prep").string() + " --config " + (dir / "config.json").string() +
                " --out " + (dir / name).string() + quiet);
  }
  const std::string ca = slurp(dir / "a.ckpt"), cb = slurp(dir / "b.ckpt");
  const std::string la = slurp(dir / "a.ckpt.loss.jsonl"), lb = slurp(dir / "b.ckpt.loss.jsonl");
  fs::remove_all(dir);
  const bool ok = rc == 0 && !ca.empty() && !la.empty() && ca == cb && la == lb;
  return {ok, fmt("exit status %d, checkpoint %zu bytes %s, loss log %s", rc, ca.size(),
                  ca == cb ? "identical" : "differs", la == lb ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"gradient fidelity", gradient_fidelity},
      {"distribution invariants", distribution_invariants},
      {"operation oracle", operation_oracle},
      {"mixture endpoints", mixture_endpoints},
      {"memorization", memorization},
      {"inferred-fact generalization", inferred_facts},
      {"quantization contiguity", quantization_contiguity},
      {"beam dominance", beam_dominance},
      {"BLEU self-tests", bleu_self_tests},
      {"determinism", determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::printf("criterion %2d %s  %s: %s\n", n, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
