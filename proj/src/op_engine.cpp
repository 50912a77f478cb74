#include "opatt/op_engine.hpp"

#include <algorithm>

#include "json.hpp"
#include "opatt/error.hpp"

namespace opatt {

using json = nlohmann::json;

const char* op_kind_name(OpKind kind) { return kind == OpKind::Minus ? "MINUS" : "ARGMAX"; }

OpKind parse_op_kind(std::string_view name) {
  if (name == "MINUS") return OpKind::Minus;
  if (name == "ARGMAX") return OpKind::Argmax;
  throw DataError("unknown operation kind " + std::string(name));
}

std::vector<NumericColumn> numeric_columns(const RecordTable& table) {
  std::vector<NumericColumn> out;
  for (const auto& field : table.fields()) {
    NumericColumn col{field, {}};
    for (const auto& r : table.records()) {
      if (r.field == field && r.numeric) col.rows.push_back(r.row);
    }
    if (col.rows.empty()) continue;
    std::sort(col.rows.begin(), col.rows.end());
    out.push_back(std::move(col));
  }
  return out;
}

std::vector<Operation> enumerate_operations(const RecordTable& table, const OpConfig& config) {
  std::vector<Operation> out;
  for (const auto& col : numeric_columns(table)) {
    std::size_t emitted = 0;
    const auto capped = [&] { return config.max_minus_per_column && emitted >= *config.max_minus_per_column; };
    for (std::size_t a = 0; a < col.rows.size() && !capped(); ++a) {
      for (std::size_t b = a + 1; b < col.rows.size() && !capped(); ++b) {
        out.push_back({OpKind::Minus, col.column, {col.rows[a], col.rows[b]}});
        ++emitted;
        if (config.both_orders && !capped()) {
          out.push_back({OpKind::Minus, col.column, {col.rows[b], col.rows[a]}});
          ++emitted;
        }
      }
    }
    if (col.rows.size() >= 2) out.push_back({OpKind::Argmax, col.column, {}});
  }
  return out;
}

namespace {

double cell(const RecordTable& table, int row, const std::string& column) {
  const Record* r = table.find(row, column);
  if (r == nullptr || !r->numeric) {
    throw ExecutionError("no numeric cell at (" + std::to_string(row) + ", " + column + ")");
  }
  return *r->numeric;
}

}  // namespace

OperationResult execute(const RecordTable& table, const Operation& op) {
  switch (op.kind) {
    case OpKind::Minus: {
      if (op.args.size() != 2) throw ExecutionError("MINUS takes exactly two row arguments");
      const double v = cell(table, op.args[0], op.column) - cell(table, op.args[1], op.column);
      return {op, ScalarValue{v}};
    }
    case OpKind::Argmax: {
      std::vector<int> rows = op.args;
      if (op.is_all()) {
        for (const auto& r : table.records()) {
          if (r.field == op.column && r.numeric) rows.push_back(r.row);
        }
        if (rows.empty()) throw ExecutionError("ARGMAX over column " + op.column + " without numeric cells");
      }
      std::sort(rows.begin(), rows.end());
      int best = rows.front();
      double best_v = cell(table, best, op.column);
      for (int row : rows) {
        const double v = cell(table, row, op.column);
        if (v > best_v) {
          best = row;
          best_v = v;
        }
      }
      return {op, IndexValue{best}};
    }
  }
  throw ExecutionError("unknown operation kind");
}

std::vector<OperationResult> execute_all(const RecordTable& table, const OpConfig& config) {
  std::vector<OperationResult> out;
  for (const auto& op : enumerate_operations(table, config)) out.push_back(execute(table, op));
  return out;
}

std::string results_to_json(const std::string& id, const std::vector<OperationResult>& results) {
  json arr = json::array();
  for (const auto& r : results) {
    json args = r.op.is_all() ? json("ALL") : json(r.op.args);
    json op = {{"kind", op_kind_name(r.op.kind)}, {"column", r.op.column}, {"args", std::move(args)}};
    json res = r.is_scalar() ? json{{"type", "scalar"}, {"value", r.scalar()}}
                             : json{{"type", "index"}, {"value", r.index()}};
    arr.push_back({{"op", std::move(op)}, {"result", std::move(res)}});
  }
  return json{{"id", id}, {"results", std::move(arr)}}.dump();
}

std::pair<std::string, std::vector<OperationResult>> results_from_json(std::string_view line) {
  try {
    const json j = json::parse(line);
    std::vector<OperationResult> out;
    for (const auto& item : j.at("results")) {
      const auto& op = item.at("op");
      Operation o;
      o.kind = parse_op_kind(op.at("kind").get<std::string>());
      o.column = op.at("column").get<std::string>();
      if (!op.at("args").is_string()) o.args = op.at("args").get<std::vector<int>>();
      const auto& res = item.at("result");
      const auto type = res.at("type").get<std::string>();
      if (type == "scalar") {
        out.push_back({std::move(o), ScalarValue{res.at("value").get<double>()}});
      } else if (type == "index") {
        out.push_back({std::move(o), IndexValue{res.at("value").get<int>()}});
      } else {
        throw DataError("unknown result type " + type);
      }
    }
    return {j.at("id").get<std::string>(), std::move(out)};
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed operation dump: ") + e.what());
  }
}

}  // namespace opatt
