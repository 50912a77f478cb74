#pragma once

// The opatt command-line surface. Exit codes: 0 success, 1 contract or
// config error, 2 I/O error.

#include <filesystem>
#include <string>
#include <vector>

#include "opatt/data.hpp"
#include "opatt/op_engine.hpp"

namespace opatt::cli {

int run(int argc, char** argv);

struct Preprocessed {
  std::vector<Example> examples;
  std::vector<std::vector<OperationResult>> results;
  Vocab vocab;
  bool both_orders = false;
};

// Reads a directory written by `opatt preprocess`.
Preprocessed load_preprocessed(const std::filesystem::path& dir);

}  // namespace opatt::cli
