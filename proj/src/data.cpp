#include "opatt/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "opatt/error.hpp"

namespace opatt {

using json = nlohmann::json;

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace

// ---------------------------------------------------------------- RecordTable

RecordTable::RecordTable(std::vector<Record> records) : records_(std::move(records)) {
  std::set<std::pair<int, std::string>> seen;
  for (const auto& r : records_) {
    if (r.row < 1) throw DataError("record row must be >= 1, got " + std::to_string(r.row));
    if (r.field.empty()) throw DataError("record field is empty (row " + std::to_string(r.row) + ")");
    if (r.value.empty()) {
      throw DataError("record value is empty at (" + std::to_string(r.row) + ", " + r.field + ")");
    }
    if (!seen.emplace(r.row, r.field).second) {
      throw DataError("duplicate record (" + std::to_string(r.row) + ", " + r.field + ")");
    }
    if (std::find(fields_.begin(), fields_.end(), r.field) == fields_.end()) fields_.push_back(r.field);
    rows_ = std::max(rows_, r.row);
  }
}

const Record* RecordTable::find(int row, std::string_view field) const {
  for (const auto& r : records_) {
    if (r.row == row && r.field == field) return &r;
  }
  return nullptr;
}

// ---------------------------------------------------------------- text

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      const bool in_number = (c == '.' || c == ',') && !cur.empty() && is_digit(cur.back()) &&
                             i + 1 < text.size() && is_digit(text[i + 1]);
      if (in_number) {
        cur.push_back(c);
      } else {
        flush();
        out.emplace_back(1, c);
      }
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  return out;
}

std::optional<double> parse_decimal(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::fixed);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string normalize_value(std::string_view value) { return lower(trim(value)); }

// ---------------------------------------------------------------- JSONL

Example parse_example(std::string_view json_line, std::size_t line_no, bool require_text) {
  const std::string where = "line " + std::to_string(line_no) + ": ";
  json j;
  try {
    j = json::parse(json_line);
  } catch (const json::parse_error& e) {
    throw DataError(where + "invalid JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw DataError(where + "expected a JSON object");
  if (!j.contains("records") || !j["records"].is_array()) throw DataError(where + "missing records array");
  if (j.contains("text") && !j["text"].is_string()) throw DataError(where + "text must be a string");
  if (require_text && !j.contains("text")) throw DataError(where + "missing text string");

  Example ex;
  if (j.contains("id")) {
    const auto& id = j["id"];
    ex.id = id.is_string() ? id.get<std::string>() : id.dump();
  } else {
    ex.id = std::to_string(line_no);
  }

  std::vector<Record> records;
  for (const auto& r : j["records"]) {
    if (!r.is_object() || !r.contains("row") || !r.contains("field") || !r.contains("value")) {
      throw DataError(where + "record needs row, field and value");
    }
    if (!r["row"].is_number_integer()) throw DataError(where + "record row must be an integer");
    if (!r["field"].is_string()) throw DataError(where + "record field must be a string");
    Record rec;
    rec.row = r["row"].get<int>();
    rec.field = r["field"].get<std::string>();
    rec.value = r["value"].is_string() ? r["value"].get<std::string>() : r["value"].dump();
    rec.numeric = parse_decimal(rec.value);
    records.push_back(std::move(rec));
  }
  try {
    ex.table = RecordTable(std::move(records));
  } catch (const DataError& e) {
    throw DataError(where + e.what());
  }
  if (j.contains("text")) ex.text = tokenize(j["text"].get<std::string>());
  if (require_text && ex.text.empty()) throw DataError(where + "text has no tokens");
  return ex;
}

std::vector<Example> parse_dataset(std::istream& in, bool require_text) {
  std::vector<Example> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    out.push_back(parse_example(line, line_no, require_text));
  }
  return out;
}

std::vector<Example> load_dataset(const std::filesystem::path& path, bool require_text) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset " + path.string());
  return parse_dataset(in, require_text);
}

std::string example_to_json(const Example& ex) {
  json records = json::array();
  for (const auto& r : ex.table.records()) records.push_back({{"row", r.row}, {"field", r.field}, {"value", r.value}});
  std::string text;
  for (std::size_t i = 0; i < ex.text.size(); ++i) {
    if (i) text += ' ';
    text += ex.text[i];
  }
  json j = {{"id", ex.id}, {"records", std::move(records)}, {"text", text}};
  return j.dump();
}

void save_dataset(const std::filesystem::path& path, const std::vector<Example>& examples) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& ex : examples) out << example_to_json(ex) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------- Vocab

Vocab::Vocab(std::vector<std::string> words, std::vector<std::string> fields, int row_capacity)
    : row_capacity_(row_capacity) {
  if (row_capacity < 1) throw ContractError("row capacity must be positive");
  id_to_word_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (std::size_t i = 0; i < id_to_word_.size(); ++i) word_to_id_.emplace(id_to_word_[i], i);
  for (auto& w : words) {
    if (w.empty()) throw DataError("empty vocabulary entry");
    if (!word_to_id_.emplace(w, id_to_word_.size()).second) throw DataError("duplicate vocabulary entry " + w);
    id_to_word_.push_back(std::move(w));
  }
  id_to_field_ = {"<unk>"};
  field_to_id_.emplace("<unk>", 0);
  for (auto& f : fields) {
    if (!field_to_id_.emplace(f, id_to_field_.size()).second) throw DataError("duplicate field " + f);
    id_to_field_.push_back(std::move(f));
  }
}

std::size_t Vocab::word_id(std::string_view token) const { return find_word(token).value_or(kUnk); }

std::optional<std::size_t> Vocab::find_word(std::string_view token) const {
  const auto it = word_to_id_.find(std::string(token));
  if (it == word_to_id_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::string> Vocab::words() const {
  return {id_to_word_.begin() + static_cast<std::ptrdiff_t>(kSpecials), id_to_word_.end()};
}

std::size_t Vocab::field_id(std::string_view field) const {
  const auto it = field_to_id_.find(std::string(field));
  return it == field_to_id_.end() ? kUnknownField : it->second;
}

std::vector<std::string> Vocab::fields() const { return {id_to_field_.begin() + 1, id_to_field_.end()}; }

std::size_t Vocab::row_id(int row) const {
  if (row < 1) throw IndexError("row " + std::to_string(row) + " is not a valid row index");
  if (row > row_capacity_) {
    throw CapacityError("row " + std::to_string(row) + " exceeds the row vocabulary capacity " +
                        std::to_string(row_capacity_));
  }
  return static_cast<std::size_t>(row - 1);
}

namespace {

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& l : lines) out << l << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

void Vocab::save(const std::filesystem::path& words_file, const std::filesystem::path& fields_file) const {
  write_lines(words_file, words());
  write_lines(fields_file, fields());
}

Vocab Vocab::load(const std::filesystem::path& words_file, const std::filesystem::path& fields_file,
                  int row_capacity) {
  return Vocab(read_lines(words_file), read_lines(fields_file), row_capacity);
}

Vocab build_vocab(const std::vector<Example>& examples, std::size_t min_count, int row_capacity) {
  if (min_count < 1) throw ContractError("min_count must be >= 1");
  std::map<std::string, std::size_t> counts;
  std::set<std::string> fields;
  for (const auto& ex : examples) {
    for (const auto& t : ex.text) ++counts[t];
    for (const auto& r : ex.table.records()) {
      ++counts[normalize_value(r.value)];
      fields.insert(r.field);
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [tok, n] : counts) {
    if (n < min_count) continue;
    if (tok == "<pad>" || tok == "<bos>" || tok == "<eos>" || tok == "<unk>") continue;
    ranked.emplace_back(tok, n);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  std::vector<std::string> words;
  words.reserve(ranked.size());
  for (auto& [tok, n] : ranked) words.push_back(tok);
  return Vocab(std::move(words), {fields.begin(), fields.end()}, row_capacity);
}

// ---------------------------------------------------------------- indexing

IndexedExample encode_example(const Example& ex, const Vocab& vocab) {
  IndexedExample out;
  std::unordered_map<std::string, std::size_t> oov_ids;
  auto extended_id = [&](const std::string& token) -> std::optional<std::size_t> {
    if (auto id = vocab.find_word(token)) return id;
    if (auto it = oov_ids.find(token); it != oov_ids.end()) return it->second;
    return std::nullopt;
  };

  for (const auto& r : ex.table.records()) {
    IndexedRecord ir;
    ir.row_id = vocab.row_id(r.row);
    ir.field_id = vocab.field_id(r.field);
    std::string v = normalize_value(r.value);
    ir.value_id = vocab.word_id(v);
    if (auto id = extended_id(v)) {
      ir.copy_id = *id;
    } else {
      ir.copy_id = vocab.size() + out.oov_values.size();
      oov_ids.emplace(v, ir.copy_id);
      out.oov_values.push_back(v);
    }
    out.records.push_back(ir);
    out.values.push_back(std::move(v));
  }
  out.extended_size = vocab.size() + out.oov_values.size();

  out.text_ids.push_back(Vocab::kBos);
  out.target_ids.push_back(Vocab::kBos);
  for (const auto& t : ex.text) {
    out.text_ids.push_back(vocab.word_id(t));
    out.target_ids.push_back(extended_id(t).value_or(Vocab::kUnk));
  }
  out.text_ids.push_back(Vocab::kEos);
  out.target_ids.push_back(Vocab::kEos);
  return out;
}

std::vector<std::string> decode_ids(const std::vector<std::size_t>& ids, const Vocab& vocab,
                                    const std::vector<std::string>& oov) {
  std::vector<std::string> out;
  for (std::size_t id : ids) {
    if (id == Vocab::kBos || id == Vocab::kEos || id == Vocab::kPad) continue;
    if (id < vocab.size()) {
      out.push_back(vocab.word(id));
    } else if (id - vocab.size() < oov.size()) {
      out.push_back(oov[id - vocab.size()]);
    } else {
      throw IndexError("token id " + std::to_string(id) + " outside the extended vocabulary");
    }
  }
  return out;
}

}  // namespace opatt
