#pragma once

// Tables as (row, field, value) records, JSONL ingestion, vocabularies and
// example indexing.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace opatt {

struct Record {
  int row = 0;  // 1-based
  std::string field;
  std::string value;
  std::optional<double> numeric;  // set iff value is a finite decimal
};

// Records of one input table. (row, field) pairs are unique; `fields` keeps
// the order of first appearance.
class RecordTable {
 public:
  RecordTable() = default;
  explicit RecordTable(std::vector<Record> records);

  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  int rows() const { return rows_; }
  const std::vector<std::string>& fields() const { return fields_; }
  const Record* find(int row, std::string_view field) const;

 private:
  std::vector<Record> records_;
  std::vector<std::string> fields_;
  int rows_ = 0;
};

struct Example {
  std::string id;
  RecordTable table;
  std::vector<std::string> text;
};

// Lowercases, splits on whitespace and splits punctuation into standalone
// tokens. '.' and ',' between two digits stay inside the number.
std::vector<std::string> tokenize(std::string_view text);

// Full-string decimal parse without exponents; nullopt for anything else.
std::optional<double> parse_decimal(std::string_view s);

// Record values as they appear in the vocabulary and in copy matching.
std::string normalize_value(std::string_view value);

// Inputs for generation may omit "text" when require_text is false.
Example parse_example(std::string_view json_line, std::size_t line_no = 0, bool require_text = true);
std::vector<Example> parse_dataset(std::istream& in, bool require_text = true);
std::vector<Example> load_dataset(const std::filesystem::path& path, bool require_text = true);
std::string example_to_json(const Example& ex);
void save_dataset(const std::filesystem::path& path, const std::vector<Example>& examples);

class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kSpecials = 4;
  static constexpr std::size_t kUnknownField = 0;
  static constexpr int kDefaultRowCapacity = 64;

  Vocab(std::vector<std::string> words, std::vector<std::string> fields,
        int row_capacity = kDefaultRowCapacity);

  std::size_t size() const { return id_to_word_.size(); }
  std::size_t word_id(std::string_view token) const;  // kUnk when absent
  std::optional<std::size_t> find_word(std::string_view token) const;
  const std::string& word(std::size_t id) const { return id_to_word_.at(id); }
  // Non-special words in id order.
  std::vector<std::string> words() const;

  std::size_t field_count() const { return id_to_field_.size(); }
  std::size_t field_id(std::string_view field) const;  // kUnknownField when absent
  const std::string& field(std::size_t id) const { return id_to_field_.at(id); }
  // Real field names in id order (without the unknown slot).
  std::vector<std::string> fields() const;

  int row_capacity() const { return row_capacity_; }
  std::size_t row_vocab_size() const { return static_cast<std::size_t>(row_capacity_) + 1; }
  std::size_t row_id(int row) const;  // row 1 -> 0; throws CapacityError past capacity
  std::size_t all_row_id() const { return static_cast<std::size_t>(row_capacity_); }

  // words file: one token per line, line i holds id i + kSpecials.
  // fields file: one field per line, line i holds id i + 1.
  void save(const std::filesystem::path& words_file, const std::filesystem::path& fields_file) const;
  static Vocab load(const std::filesystem::path& words_file, const std::filesystem::path& fields_file,
                    int row_capacity = kDefaultRowCapacity);

  bool operator==(const Vocab& other) const {
    return id_to_word_ == other.id_to_word_ && id_to_field_ == other.id_to_field_ &&
           row_capacity_ == other.row_capacity_;
  }

 private:
  std::vector<std::string> id_to_word_;
  std::unordered_map<std::string, std::size_t> word_to_id_;
  std::vector<std::string> id_to_field_;
  std::unordered_map<std::string, std::size_t> field_to_id_;
  int row_capacity_ = kDefaultRowCapacity;
};

// Words from texts and normalized record values with count >= min_count,
// ordered by (count desc, token asc). Fields are sorted.
Vocab build_vocab(const std::vector<Example>& examples, std::size_t min_count,
                  int row_capacity = Vocab::kDefaultRowCapacity);

struct IndexedRecord {
  std::size_t row_id = 0;
  std::size_t field_id = 0;
  std::size_t value_id = 0;  // vocabulary id (kUnk for OOV values)
  std::size_t copy_id = 0;   // extended-vocabulary id
};

struct IndexedExample {
  std::vector<std::size_t> text_ids;    // BOS ... EOS, OOV -> kUnk
  std::vector<std::size_t> target_ids;  // BOS ... EOS over the extended vocabulary
  std::vector<IndexedRecord> records;
  std::vector<std::string> values;      // normalized value string per record
  std::vector<std::string> oov_values;  // extended id = vocab.size() + position
  std::size_t extended_size = 0;
};

// Extended vocabulary = vocabulary plus this example's OOV record values.
IndexedExample encode_example(const Example& ex, const Vocab& vocab);

// Maps ids back to tokens. Ids past the vocabulary resolve through `oov`;
// kUnk becomes "<unk>". BOS/EOS/PAD are dropped.
std::vector<std::string> decode_ids(const std::vector<std::size_t>& ids, const Vocab& vocab,
                                    const std::vector<std::string>& oov = {});

}  // namespace opatt
