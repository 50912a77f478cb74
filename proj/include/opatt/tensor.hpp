#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "opatt/error.hpp"

namespace opatt {

// Rank-2 shape. Vectors are columns (n x 1); scalars are 1 x 1.
struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  constexpr std::size_t size() const { return rows * cols; }
  constexpr bool operator==(const Shape&) const = default;
  std::string str() const { return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]"; }
};

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(s), data(s.size(), T(0)) {}
  Tensor(Shape s, std::vector<T> values) : shape(s), data(std::move(values)) {
    if (data.size() != shape.size()) {
      throw ShapeError("tensor of shape " + shape.str() + " given " + std::to_string(data.size()) +
                       " values");
    }
  }

  static Tensor column(std::vector<T> values) {
    const Shape s{values.size(), 1};
    return Tensor(s, std::move(values));
  }
  static Tensor scalar(T v) { return Tensor(Shape{1, 1}, {v}); }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  T& operator()(std::size_t r, std::size_t c) { return data[r * shape.cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * shape.cols + c]; }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  std::span<T> span() { return data; }
  std::span<const T> span() const { return data; }
};

struct ParamId {
  std::uint32_t index = 0;
  constexpr bool operator==(const ParamId&) const = default;
};

template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
};

// Ordered, named collection of trainable tensors. Order is the checkpoint order.
template <typename T>
class ParamSet {
 public:
  ParamId add(const std::string& name, Shape shape) {
    if (by_name_.contains(name)) throw ContractError("duplicate parameter " + name);
    const ParamId id{static_cast<std::uint32_t>(params_.size())};
    params_.push_back(Param<T>{name, Tensor<T>(shape)});
    by_name_.emplace(name, id.index);
    return id;
  }

  Param<T>& operator[](ParamId id) { return params_.at(id.index); }
  const Param<T>& operator[](ParamId id) const { return params_.at(id.index); }
  Param<T>& at(std::size_t i) { return params_.at(i); }
  const Param<T>& at(std::size_t i) const { return params_.at(i); }

  ParamId find(const std::string& name) const {
    const auto it = by_name_.find(name);
    if (it == by_name_.end()) throw IndexError("unknown parameter " + name);
    return ParamId{it->second};
  }

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  // Same names and shapes, values converted element-wise.
  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : params_) {
      const ParamId id = out.add(p.name, p.value.shape);
      auto& dst = out[id].value.data;
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<U>(p.value.data[i]);
    }
    return out;
  }

 private:
  std::vector<Param<T>> params_;
  std::unordered_map<std::string, std::uint32_t> by_name_;
};

// Gradient accumulators aligned with a ParamSet. One per worker.
template <typename T>
class GradStore {
 public:
  GradStore() = default;
  explicit GradStore(const ParamSet<T>& params) {
    grads_.reserve(params.size());
    for (const auto& p : params) grads_.emplace_back(p.value.shape);
  }

  Tensor<T>& operator[](ParamId id) { return grads_.at(id.index); }
  const Tensor<T>& operator[](ParamId id) const { return grads_.at(id.index); }
  Tensor<T>& at(std::size_t i) { return grads_.at(i); }
  const Tensor<T>& at(std::size_t i) const { return grads_.at(i); }
  std::size_t size() const { return grads_.size(); }

  void zero() {
    for (auto& g : grads_) std::fill(g.data.begin(), g.data.end(), T(0));
  }

 private:
  std::vector<Tensor<T>> grads_;
};

}  // namespace opatt
