#pragma once

// Shared fixtures: the two-team example table and tiny model configurations.

#include <random>
#include <string>
#include <vector>

#include "opatt/data.hpp"
#include "opatt/model.hpp"
#include "opatt/op_engine.hpp"

namespace testing {

inline const char* kTable1Line =
    R"({"id":"g1","records":[{"row":1,"field":"Team","value":"Heat"},{"row":1,"field":"Points","value":"94"},)"
    R"({"row":1,"field":"Rebound","value":"44"},{"row":2,"field":"Team","value":"Hawks"},)"
    R"({"row":2,"field":"Points","value":"95"},{"row":2,"field":"Rebound","value":"38"}],)"
    R"("text":"Hawks edges the Heat with 95 - 94"})";

inline opatt::Example table1() { return opatt::parse_example(kTable1Line, 1); }

inline opatt::ModelConfig tiny_config() {
  opatt::ModelConfig c;
  c.word_dim = 8;
  c.row_dim = 4;
  c.enc_hidden = 8;
  c.dec_hidden = 16;
  c.attn_hidden = 16;
  c.row_capacity = 8;
  return c;
}

// Vocabulary of exactly `size` ids (specials included).
inline opatt::Vocab padded_vocab(const std::vector<opatt::Example>& examples, std::size_t size, int capacity) {
  opatt::Vocab base = opatt::build_vocab(examples, 1, capacity);
  std::vector<std::string> words = base.words();
  for (std::size_t i = 0; words.size() + opatt::Vocab::kSpecials < size; ++i) words.push_back("w" + std::to_string(i));
  words.resize(size - opatt::Vocab::kSpecials);
  return opatt::Vocab(words, base.fields(), capacity);
}

// Random table with `rows` rows and `cols` numeric columns plus one text column.
inline opatt::Example random_example(std::mt19937_64& rng, int rows, int cols, const std::string& text) {
  std::uniform_int_distribution<int> value(0, 20);
  std::vector<opatt::Record> records;
  for (int r = 1; r <= rows; ++r) {
    records.push_back({r, "Team", "t" + std::to_string(value(rng)), std::nullopt});
    for (int c = 0; c < cols; ++c) {
      const int v = value(rng) - 10;
      records.push_back({r, "C" + std::to_string(c), std::to_string(v), static_cast<double>(v)});
    }
  }
  return {"rand", opatt::RecordTable(std::move(records)), opatt::tokenize(text)};
}

template <typename T>
void randomize(opatt::Model<T>& model, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, scale);
  for (auto& p : model.params()) {
    for (auto& v : p.value.data) v = static_cast<T>(d(rng));
  }
}

}  // namespace testing
