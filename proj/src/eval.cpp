#include "opatt/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "opatt/error.hpp"
#include "opatt/op_engine.hpp"

namespace opatt {

namespace {

using Counts = std::map<std::vector<std::string>, std::size_t>;

Counts ngrams(const Tokens& t, std::size_t n) {
  Counts c;
  for (std::size_t i = 0; i + n <= t.size(); ++i) ++c[Tokens(t.begin() + i, t.begin() + i + n)];
  return c;
}

std::string join(const Tokens& t) {
  std::string s;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i) s += ' ';
    s += t[i];
  }
  return s;
}

}  // namespace

double bleu4(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references, BleuSmoothing smoothing) {
  if (candidates.size() != references.size()) {
    throw ContractError("bleu4 given " + std::to_string(candidates.size()) + " candidates and " +
                        std::to_string(references.size()) + " references");
  }
  if (references.empty()) throw ContractError("bleu4 needs at least one reference");

  double matched[4] = {0, 0, 0, 0};
  double total[4] = {0, 0, 0, 0};
  double cand_len = 0.0, ref_len = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += static_cast<double>(candidates[i].size());
    ref_len += static_cast<double>(references[i].size());
    for (std::size_t n = 1; n <= 4; ++n) {
      const Counts c = ngrams(candidates[i], n);
      const Counts r = ngrams(references[i], n);
      for (const auto& [gram, count] : c) {
        const auto it = r.find(gram);
        if (it != r.end()) matched[n - 1] += static_cast<double>(std::min(count, it->second));
        total[n - 1] += static_cast<double>(count);
      }
    }
  }
  if (cand_len == 0.0) return 0.0;

  double log_sum = 0.0;
  for (std::size_t n = 0; n < 4; ++n) {
    double m = matched[n], t = total[n];
    if (smoothing == BleuSmoothing::AddOne && n > 0) {
      m += 1.0;
      t += 1.0;
    }
    if (m == 0.0 || t == 0.0) return 0.0;
    log_sum += std::log(m / t);
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - ref_len / cand_len) : 1.0;
  return std::min(100.0, 100.0 * bp * std::exp(log_sum / 4.0));
}

namespace {

struct TeamRows {
  const Record* winner_team;
  const Record* winner_points;
  const Record* loser_team;
  const Record* loser_points;
};

// The ARGMAX(Points) row and the other Team row.
TeamRows team_rows(const RecordTable& table) {
  const Operation op{OpKind::Argmax, "Points", {}};
  int best = 0;
  try {
    best = execute(table, op).index();
  } catch (const ExecutionError& e) {
    throw DataError(std::string("template inapplicable: ") + e.what());
  }
  const Record* wt = table.find(best, "Team");
  if (!wt) throw DataError("template inapplicable: no Team on row " + std::to_string(best));
  for (const auto& r : table.records()) {
    if (r.field == "Team" && r.row != best) {
      const Record* lp = table.find(r.row, "Points");
      if (!lp) throw DataError("template inapplicable: no Points on row " + std::to_string(r.row));
      return {wt, table.find(best, "Points"), &r, lp};
    }
  }
  throw DataError("template inapplicable: table needs two Team rows");
}

}  // namespace

Tokens template_generate(const RecordTable& table) {
  const TeamRows rows = team_rows(table);
  return {normalize_value(rows.winner_team->value), "beats", normalize_value(rows.loser_team->value), "with",
          normalize_value(rows.winner_points->value), "-", normalize_value(rows.loser_points->value)};
}

const std::vector<Tokens>& winner_verbs() {
  static const std::vector<Tokens> verbs = [] {
    std::vector<Tokens> v;
    for (const char* s : {"beat", "beats", "edge", "edges", "edged", "top", "tops", "topped", "past", "rout",
                          "routs", "routed", "hold off", "holds off", "held off", "blow out", "blows out",
                          "blew out", "power", "powers", "powered", "roll past", "rolls past", "rolled past",
                          "win over", "wins over", "won over", "out last", "outlast", "outlasts", "outlasted",
                          "pull away", "pulls away", "pulled away", "survive", "survives", "survived",
                          "easy win over"}) {
      v.push_back(tokenize(s));
    }
    // Longest phrase first so "easy win over" wins over "win over".
    std::stable_sort(v.begin(), v.end(), [](const Tokens& a, const Tokens& b) { return a.size() > b.size(); });
    return v;
  }();
  return verbs;
}

std::optional<WinnerClaim> extract_winner_claim(const Tokens& t) {
  const auto is_number = [](const std::string& s) { return parse_decimal(s).has_value(); };
  for (std::size_t i = 1; i < t.size(); ++i) {
    for (const Tokens& verb : winner_verbs()) {
      if (i + verb.size() > t.size() || !std::equal(verb.begin(), verb.end(), t.begin() + i)) continue;
      std::size_t j = i + verb.size();
      if (j < t.size() && t[j] == "the") ++j;
      if (j >= t.size()) break;
      WinnerClaim claim{t[i - 1], t[j], "", ""};
      ++j;
      if (j < t.size() && (t[j] == "with" || t[j] == ",")) ++j;
      if (j + 2 < t.size() && is_number(t[j]) && t[j + 1] == "-" && is_number(t[j + 2])) {
        claim.score1 = t[j];
        claim.score2 = t[j + 2];
        return claim;
      }
      break;
    }
  }
  return std::nullopt;
}

bool winner_claim_correct(const Tokens& tokens, const RecordTable& table) {
  const auto claim = extract_winner_claim(tokens);
  if (!claim) return false;
  const TeamRows rows = team_rows(table);
  if (claim->winner != normalize_value(rows.winner_team->value)) return false;
  const auto num = [](const std::string& s) { return *parse_decimal(s); };
  std::vector<double> said = {num(claim->score1), num(claim->score2)};
  std::vector<double> truth = {*rows.winner_points->numeric, *rows.loser_points->numeric};
  std::sort(said.begin(), said.end());
  std::sort(truth.begin(), truth.end());
  return said == truth;
}

double winner_accuracy(const std::vector<Tokens>& outputs, const std::vector<RecordTable>& tables) {
  if (outputs.size() != tables.size()) {
    throw ContractError("winner_accuracy given " + std::to_string(outputs.size()) + " outputs and " +
                        std::to_string(tables.size()) + " tables");
  }
  if (outputs.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < outputs.size(); ++i) correct += winner_claim_correct(outputs[i], tables[i]) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(outputs.size());
}

std::vector<std::vector<double>> inspect_quantization(const Model<float>& model, const std::vector<double>& values) {
  if (model.config().no_quantization) throw ContractError("model was trained without quantization");
  std::vector<std::vector<double>> out;
  for (double v : values) {
    Graph<float> g(model.params());
    const auto q = model.quantize_scalar(g, v);
    const auto& w = g.value(q.weights).data;
    out.emplace_back(w.begin(), w.end());
  }
  return out;
}

std::string quantization_csv(const std::vector<double>& values, const std::vector<std::vector<double>>& weights) {
  std::ostringstream os;
  os.precision(9);
  os << "value";
  const std::size_t bins = weights.empty() ? 0 : weights.front().size();
  for (std::size_t l = 0; l < bins; ++l) os << ",bin" << l;
  os << '\n';
  for (std::size_t i = 0; i < values.size(); ++i) {
    os << values[i];
    for (double w : weights[i]) os << ',' << w;
    os << '\n';
  }
  return os.str();
}

std::vector<GateStep> inspect_gates(const Model<float>& model, const ModelInput& input, const Vocab& vocab,
                                    std::size_t max_len) {
  Graph<float> g(model.params());
  const auto enc = model.encode(g, input);
  auto state = model.initial_state(g, enc);
  std::size_t prev = Vocab::kBos;
  std::vector<GateStep> out;
  for (std::size_t t = 0; t < max_len; ++t) {
    const auto s = model.step(g, enc, state, prev);
    const auto& dist = g.value(s.dist).data;
    std::size_t best = Vocab::kEos;
    for (std::size_t k = 0; k < dist.size(); ++k) {
      if (k == Vocab::kPad || k == Vocab::kBos) continue;
      if (dist[k] > dist[best] || (dist[k] == dist[best] && k < best)) best = k;
    }
    std::string token = best == Vocab::kEos ? "<eos>" : decode_ids({best}, vocab, input.oov_values).front();
    out.push_back({token, g.scalar(s.lambda), g.scalar(s.p_gen)});
    if (best == Vocab::kEos) break;
    state = s.next;
    prev = best;
  }
  return out;
}

std::string gates_csv(const std::vector<GateStep>& steps) {
  std::ostringstream os;
  os.precision(9);
  os << "step,token,lambda,p_gen\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    std::string tok = steps[i].token;
    if (tok.find_first_of(",\"") != std::string::npos) {
      std::string q = "\"";
      for (char c : tok) q += c == '"' ? std::string("\"\"") : std::string(1, c);
      tok = q + "\"";
    }
    os << i + 1 << ',' << tok << ',' << steps[i].lambda << ',' << steps[i].p_gen << '\n';
  }
  return os.str();
}

nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json examples = nlohmann::json::array();
  double cand = 0, ref = 0;
  for (const auto& e : r.examples) {
    examples.push_back({{"id", e.id},
                        {"candidate", join(e.candidate)},
                        {"reference", join(e.reference)},
                        {"candidate_length", e.candidate.size()},
                        {"reference_length", e.reference.size()}});
    cand += static_cast<double>(e.candidate.size());
    ref += static_cast<double>(e.reference.size());
  }
  const double n = r.examples.empty() ? 1.0 : static_cast<double>(r.examples.size());
  nlohmann::json j = {{"bleu4", r.bleu4},
                      {"example_count", r.examples.size()},
                      {"mean_candidate_length", cand / n},
                      {"mean_reference_length", ref / n},
                      {"examples", std::move(examples)}};
  j["winner_accuracy"] = r.winner_accuracy ? nlohmann::json(*r.winner_accuracy) : nlohmann::json(nullptr);
  j["checkpoint"] = r.checkpoint.empty() ? nlohmann::json(nullptr) : nlohmann::json(r.checkpoint);
  j["beam"] = r.beam ? nlohmann::json(*r.beam) : nlohmann::json(nullptr);
  return j;
}

}  // namespace opatt
