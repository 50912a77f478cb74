#pragma once

// Corpus BLEU-4, the template baseline, the winner-claim diagnostic and the
// quantization / gate inspection dumps.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "opatt/data.hpp"
#include "opatt/model.hpp"

namespace opatt {

using Tokens = std::vector<std::string>;

enum class BleuSmoothing { None, AddOne };

// Percentage in [0, 100]. Single reference per candidate. Add-one smoothing
// applies to n >= 2; without smoothing any zero precision gives 0.
double bleu4(const std::vector<Tokens>& candidates, const std::vector<Tokens>& references,
             BleuSmoothing smoothing = BleuSmoothing::None);

// "{team1} beats {team2} with {p1} - {p2}", team1 on the ARGMAX(Points) row.
Tokens template_generate(const RecordTable& table);

struct WinnerClaim {
  std::string winner;
  std::string loser;
  std::string score1;
  std::string score2;
};

const std::vector<Tokens>& winner_verbs();
// First "A <verb> [the] B [with|,] p1 - p2" in the tokens.
std::optional<WinnerClaim> extract_winner_claim(const Tokens& tokens);
bool winner_claim_correct(const Tokens& tokens, const RecordTable& table);
double winner_accuracy(const std::vector<Tokens>& outputs, const std::vector<RecordTable>& tables);

// One row of softmax weights per value; rows are uniform for a fresh model.
std::vector<std::vector<double>> inspect_quantization(const Model<float>& model, const std::vector<double>& values);
std::string quantization_csv(const std::vector<double>& values, const std::vector<std::vector<double>>& weights);

struct GateStep {
  std::string token;
  double lambda = 0.0;
  double p_gen = 0.0;
};

// Greedy decode recording the gate values behind each emitted token (EOS included).
std::vector<GateStep> inspect_gates(const Model<float>& model, const ModelInput& input, const Vocab& vocab,
                                    std::size_t max_len);
std::string gates_csv(const std::vector<GateStep>& steps);

struct EvalExample {
  std::string id;
  Tokens candidate;
  Tokens reference;
};

struct EvalReport {
  double bleu4 = 0.0;
  std::optional<double> winner_accuracy;
  std::string checkpoint;
  std::optional<std::size_t> beam;
  std::vector<EvalExample> examples;
};

nlohmann::json report_to_json(const EvalReport& report);

}  // namespace opatt
