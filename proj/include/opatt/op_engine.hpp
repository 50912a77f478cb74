#pragma once

// Symbolic operations pre-executed over numeric table columns.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "opatt/data.hpp"

namespace opatt {

enum class OpKind { Minus = 0, Argmax = 1 };
inline constexpr std::size_t kOpKinds = 2;

const char* op_kind_name(OpKind kind);
OpKind parse_op_kind(std::string_view name);

struct Operation {
  OpKind kind = OpKind::Minus;
  std::string column;
  std::vector<int> args;  // row indices for MINUS; empty means ALL

  bool is_all() const { return args.empty(); }
  bool operator==(const Operation&) const = default;
};

struct ScalarValue {
  double value = 0.0;
  bool operator==(const ScalarValue&) const = default;
};
struct IndexValue {
  int row = 0;
  bool operator==(const IndexValue&) const = default;
};

struct OperationResult {
  Operation op;
  std::variant<ScalarValue, IndexValue> value;

  bool is_scalar() const { return std::holds_alternative<ScalarValue>(value); }
  double scalar() const { return std::get<ScalarValue>(value).value; }
  int index() const { return std::get<IndexValue>(value).row; }
  bool operator==(const OperationResult&) const = default;
};

struct OpConfig {
  bool both_orders = false;
  // Cap on MINUS operations per column; nullopt means no cap.
  std::optional<std::size_t> max_minus_per_column;
};

struct NumericColumn {
  std::string column;
  std::vector<int> rows;  // ascending
  bool operator==(const NumericColumn&) const = default;
};

std::vector<NumericColumn> numeric_columns(const RecordTable& table);
std::vector<Operation> enumerate_operations(const RecordTable& table, const OpConfig& config = {});
OperationResult execute(const RecordTable& table, const Operation& op);
std::vector<OperationResult> execute_all(const RecordTable& table, const OpConfig& config = {});

// One JSONL line per example: {"id": ..., "results": [{op: {kind, column, args}, result: {type, value}}]}
std::string results_to_json(const std::string& id, const std::vector<OperationResult>& results);
std::pair<std::string, std::vector<OperationResult>> results_from_json(std::string_view line);

}  // namespace opatt
