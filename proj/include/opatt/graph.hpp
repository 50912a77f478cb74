#pragma once

// Reverse-mode automatic differentiation over rank-2 tensors.
//
// A Graph records every primitive as it is evaluated (define-by-run). A graph
// built with a GradStore records backward closures; one built without records
// values only, which is what decoding uses. Graphs are single-use: build,
// call backward() once, discard.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "opatt/tensor.hpp"

namespace opatt {

struct Var {
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::uint32_t id = kNone;

  constexpr bool valid() const { return id != kNone; }
  constexpr bool operator==(const Var&) const = default;
};

enum class UnaryOp { Tanh, Sigmoid, Exp, Log };

// Probabilities below this floor are clamped inside nll().
inline constexpr double kNllFloor = 1e-12;

template <typename T>
class Graph {
 public:
  // Value-only graph; parameters may still be read.
  Graph() = default;
  explicit Graph(const ParamSet<T>& params) : params_(&params) {}
  // Recording graph; parameter gradients are accumulated into `grads`.
  Graph(const ParamSet<T>& params, GradStore<T>& grads)
      : params_(&params), grads_(&grads), recording_(true) {}
  // Recording graph over variable() leaves only.
  static Graph recording() {
    Graph g;
    g.recording_ = true;
    return g;
  }

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) = default;
  Graph& operator=(Graph&&) = default;

  bool is_recording() const { return recording_; }

  // Leaves.
  Var constant(Tensor<T> value);
  Var variable(Tensor<T> value);  // differentiable leaf with its own grad
  Var param(ParamId id);          // cached: one node per parameter
  Var embed(ParamId table, std::size_t row);  // row of a parameter matrix as a column
  Var zeros(Shape shape) { return constant(Tensor<T>(shape)); }

  // Primitives.
  Var matmul(Var a, Var b);
  Var linear(Var w, Var x, std::optional<Var> bias = std::nullopt);  // W X (+ b per column)
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                 // elementwise
  Var scale(Var x, Var s);               // s is 1x1
  Var one_minus(Var x);                  // 1 - x
  Var add_col_broadcast(Var m, Var v);   // M[:, j] + v
  Var unary(UnaryOp op, Var x);
  Var tanh(Var x) { return unary(UnaryOp::Tanh, x); }
  Var sigmoid(Var x) { return unary(UnaryOp::Sigmoid, x); }
  Var exp(Var x) { return unary(UnaryOp::Exp, x); }
  Var log(Var x) { return unary(UnaryOp::Log, x); }
  Var softmax(Var v, std::span<const std::uint8_t> mask = {});
  Var concat(std::span<const Var> parts, int axis);
  Var concat(std::initializer_list<Var> parts, int axis) {
    return concat(std::span<const Var>(parts.begin(), parts.size()), axis);
  }
  Var gather_rows(Var table, std::span<const std::size_t> ids);
  Var transpose(Var x);
  Var sum(Var x);
  Var pick(Var x, std::size_t index);
  Var nll(Var probs, std::size_t target);
  Var scatter_add(Var x, std::span<const std::size_t> index, std::size_t size);
  Var pad_rows(Var x, std::size_t rows);
  // Fused GRU cell, gate rows ordered [reset; update; candidate]:
  //   r = sig(Wx_r x + Wh_r h + b_r),  z = sig(Wx_z x + Wh_z h + b_z)
  //   n = tanh(Wx_n x + Wh_n (r * h) + b_n),  h' = (1 - z) * n + z * h
  Var gru_cell(Var wx, Var wh, Var bias, Var x, Var h);

  const Tensor<T>& value(Var v) const;
  // Gradient after backward(); zero-shaped if the node was unreachable.
  const Tensor<T>& grad(Var v) const;
  Shape shape(Var v) const { return value(v).shape; }
  T scalar(Var v) const;

  void backward(Var loss);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t nll_floor_hits() const { return nll_floor_hits_; }

 private:
  using Backward = std::function<void(Graph&, std::uint32_t)>;

  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;  // parameter leaves alias the ParamSet
    Tensor<T> grad;
    bool requires_grad = false;
    Backward back;
  };

  Var push(Tensor<T> value, bool requires_grad, Backward back);
  bool needs(Var v) const { return nodes_[v.id].requires_grad; }
  bool any_needs(std::initializer_list<Var> vs) const;
  Tensor<T>& grad_buffer(Var v);
  const Tensor<T>& upstream(std::uint32_t self) const { return nodes_[self].grad; }
  void check(Var v) const;

  const ParamSet<T>* params_ = nullptr;
  GradStore<T>* grads_ = nullptr;
  bool recording_ = false;
  bool backward_done_ = false;
  std::size_t nll_floor_hits_ = 0;
  std::vector<Node> nodes_;
  std::vector<Var> param_nodes_;
};

extern template class Graph<float>;
extern template class Graph<double>;

}  // namespace opatt
