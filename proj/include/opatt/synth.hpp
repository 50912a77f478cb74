#pragma once

// Templated two-team score headlines for tests and experiments:
//   "{winner} {verb} {loser} {winner points} - {loser points}"
// with the verb chosen by the points gap (edges < 5 <= tops < 10 <= beats < 20 <= routs).

#include <cstdint>
#include <string>
#include <vector>

#include "opatt/data.hpp"

namespace opatt {

struct SynthConfig {
  std::size_t count = 64;
  std::size_t heldout = 0;  // extra examples whose score pairs never occur in the main set
  std::uint64_t seed = 7;
  int loser_min = 80;
  int loser_max = 120;
  int gap_min = 1;
  int gap_max = 30;
};

struct SynthCorpus {
  std::vector<Example> examples;
  std::vector<Example> heldout;
};

const char* gap_verb(int gap);
SynthCorpus synthesize(const SynthConfig& config);

}  // namespace opatt
