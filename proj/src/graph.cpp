#include "opatt/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "opatt/kernels.hpp"

namespace opatt {

namespace kp = kernels::parallel;

namespace {

template <typename T>
T sigmoid_of(T x) {
  // Two branches keep exp() from overflowing for large |x|.
  if (x >= T(0)) {
    const T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  const T e = std::exp(x);
  return e / (T(1) + e);
}

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": shapes " + a.str() + " and " + b.str() + " differ");
}

}  // namespace

template <typename T>
void Graph<T>::check(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) throw IndexError("variable does not belong to this graph");
}

template <typename T>
const Tensor<T>& Graph<T>::value(Var v) const {
  check(v);
  const Node& n = nodes_[v.id];
  return n.external != nullptr ? *n.external : n.value;
}

template <typename T>
const Tensor<T>& Graph<T>::grad(Var v) const {
  check(v);
  return nodes_[v.id].grad;
}

template <typename T>
T Graph<T>::scalar(Var v) const {
  const auto& t = value(v);
  if (t.size() != 1) throw ShapeError("scalar requested from tensor " + t.shape.str());
  return t[0];
}

template <typename T>
Var Graph<T>::push(Tensor<T> value, bool requires_grad, Backward back) {
  if (nodes_.size() >= Var::kNone) throw CapacityError("graph node limit reached");
  Node n;
  n.value = std::move(value);
  n.requires_grad = recording_ && requires_grad;
  if (n.requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
bool Graph<T>::any_needs(std::initializer_list<Var> vs) const {
  for (Var v : vs) {
    if (nodes_[v.id].requires_grad) return true;
  }
  return false;
}

template <typename T>
Tensor<T>& Graph<T>::grad_buffer(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad = Tensor<T>(value(v).shape);
  return n.grad;
}

// ---------------------------------------------------------------- leaves

template <typename T>
Var Graph<T>::constant(Tensor<T> value) {
  return push(std::move(value), false, {});
}

template <typename T>
Var Graph<T>::variable(Tensor<T> value) {
  return push(std::move(value), true, [](Graph&, std::uint32_t) {});
}

template <typename T>
Var Graph<T>::param(ParamId id) {
  if (params_ == nullptr) throw ContractError("graph has no parameter set");
  if (id.index >= params_->size()) throw IndexError("parameter id out of range");
  if (param_nodes_.size() < params_->size()) param_nodes_.resize(params_->size());
  if (param_nodes_[id.index].valid()) return param_nodes_[id.index];

  Var v = push(Tensor<T>{}, grads_ != nullptr, [id](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    kp::axpy<T>(T(1), up.span(), (*g.grads_)[id].span());
  });
  nodes_[v.id].external = &(*params_)[id].value;
  param_nodes_[id.index] = v;
  return v;
}

template <typename T>
Var Graph<T>::embed(ParamId table, std::size_t row) {
  if (params_ == nullptr) throw ContractError("graph has no parameter set");
  const Tensor<T>& e = (*params_)[table].value;
  if (row >= e.shape.rows) {
    throw IndexError("embedding row " + std::to_string(row) + " out of range for " +
                     (*params_)[table].name + " " + e.shape.str());
  }
  const std::size_t d = e.shape.cols;
  Tensor<T> out(Shape{d, 1});
  std::copy_n(e.data.begin() + static_cast<std::ptrdiff_t>(row * d), d, out.data.begin());
  return push(std::move(out), grads_ != nullptr, [table, row, d](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    auto& dst = (*g.grads_)[table].data;
    for (std::size_t i = 0; i < d; ++i) dst[row * d + i] += up[i];
  });
}

// ---------------------------------------------------------------- linear algebra

template <typename T>
Var Graph<T>::matmul(Var a, Var b) {
  return linear(a, b, std::nullopt);
}

template <typename T>
Var Graph<T>::linear(Var w, Var x, std::optional<Var> bias) {
  check(w);
  check(x);
  const Shape ws = value(w).shape;
  const Shape xs = value(x).shape;
  if (ws.cols != xs.rows) throw ShapeError("matmul: inner dimensions differ for " + ws.str() + " and " + xs.str());
  const std::size_t m = ws.rows, k = ws.cols, n = xs.cols;
  Tensor<T> out(Shape{m, n});
  if (bias) {
    check(*bias);
    const auto& bv = value(*bias);
    if (!(bv.shape == Shape{m, 1})) throw ShapeError("linear: bias " + bv.shape.str() + " for output " + out.shape.str());
    for (std::size_t i = 0; i < m; ++i) std::fill_n(out.data.begin() + static_cast<std::ptrdiff_t>(i * n), n, bv[i]);
  }
  kp::gemm_nn<T>(m, n, k, value(w).span(), value(x).span(), out.span());
  const bool rg = any_needs({w, x}) || (bias && needs(*bias));
  return push(std::move(out), rg, [w, x, bias, m, n, k](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    if (g.needs(w)) kp::gemm_nt<T>(m, k, n, up.span(), g.value(x).span(), g.grad_buffer(w).span());
    if (g.needs(x)) kp::gemm_tn<T>(k, n, m, g.value(w).span(), up.span(), g.grad_buffer(x).span());
    if (bias && g.needs(*bias)) {
      auto& db = g.grad_buffer(*bias);
      for (std::size_t i = 0; i < m; ++i) {
        T acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += up[i * n + j];
        db[i] += acc;
      }
    }
  });
}

template <typename T>
Var Graph<T>::add(Var a, Var b) {
  check(a);
  check(b);
  require_same(value(a).shape, value(b).shape, "add");
  Tensor<T> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return push(std::move(out), any_needs({a, b}), [a, b](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    if (g.needs(a)) kp::axpy<T>(T(1), up.span(), g.grad_buffer(a).span());
    if (g.needs(b)) kp::axpy<T>(T(1), up.span(), g.grad_buffer(b).span());
  });
}

template <typename T>
Var Graph<T>::sub(Var a, Var b) {
  check(a);
  check(b);
  require_same(value(a).shape, value(b).shape, "sub");
  Tensor<T> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return push(std::move(out), any_needs({a, b}), [a, b](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    if (g.needs(a)) kp::axpy<T>(T(1), up.span(), g.grad_buffer(a).span());
    if (g.needs(b)) kp::axpy<T>(T(-1), up.span(), g.grad_buffer(b).span());
  });
}

template <typename T>
Var Graph<T>::mul(Var a, Var b) {
  check(a);
  check(b);
  require_same(value(a).shape, value(b).shape, "mul");
  Tensor<T> out = value(a);
  const auto& bv = value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return push(std::move(out), any_needs({a, b}), [a, b](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    if (g.needs(a)) {
      auto& da = g.grad_buffer(a);
      const auto& bv = g.value(b);
      for (std::size_t i = 0; i < up.size(); ++i) da[i] += up[i] * bv[i];
    }
    if (g.needs(b)) {
      auto& db = g.grad_buffer(b);
      const auto& av = g.value(a);
      for (std::size_t i = 0; i < up.size(); ++i) db[i] += up[i] * av[i];
    }
  });
}

template <typename T>
Var Graph<T>::scale(Var x, Var s) {
  check(x);
  check(s);
  if (value(s).size() != 1) throw ShapeError("scale: factor must be 1x1, got " + value(s).shape.str());
  const T f = value(s)[0];
  Tensor<T> out = value(x);
  for (auto& v : out.data) v *= f;
  return push(std::move(out), any_needs({x, s}), [x, s](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    const auto& xv = g.value(x);
    if (g.needs(x)) kp::axpy<T>(g.value(s)[0], up.span(), g.grad_buffer(x).span());
    if (g.needs(s)) {
      T acc = 0;
      for (std::size_t i = 0; i < up.size(); ++i) acc += up[i] * xv[i];
      g.grad_buffer(s)[0] += acc;
    }
  });
}

template <typename T>
Var Graph<T>::one_minus(Var x) {
  check(x);
  Tensor<T> out = value(x);
  for (auto& v : out.data) v = T(1) - v;
  return push(std::move(out), needs(x), [x](Graph& g, std::uint32_t self) {
    kp::axpy<T>(T(-1), g.upstream(self).span(), g.grad_buffer(x).span());
  });
}

template <typename T>
Var Graph<T>::add_col_broadcast(Var m, Var v) {
  check(m);
  check(v);
  const Shape ms = value(m).shape;
  if (!(value(v).shape == Shape{ms.rows, 1})) {
    throw ShapeError("add_col_broadcast: vector " + value(v).shape.str() + " for matrix " + ms.str());
  }
  Tensor<T> out = value(m);
  const auto& vv = value(v);
  for (std::size_t i = 0; i < ms.rows; ++i)
    for (std::size_t j = 0; j < ms.cols; ++j) out(i, j) += vv[i];
  return push(std::move(out), any_needs({m, v}), [m, v, ms](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    if (g.needs(m)) kp::axpy<T>(T(1), up.span(), g.grad_buffer(m).span());
    if (g.needs(v)) {
      auto& dv = g.grad_buffer(v);
      for (std::size_t i = 0; i < ms.rows; ++i) {
        T acc = 0;
        for (std::size_t j = 0; j < ms.cols; ++j) acc += up(i, j);
        dv[i] += acc;
      }
    }
  });
}

// ---------------------------------------------------------------- elementwise

template <typename T>
Var Graph<T>::unary(UnaryOp op, Var x) {
  check(x);
  Tensor<T> out = value(x);
  switch (op) {
    case UnaryOp::Tanh:
      for (auto& v : out.data) v = std::tanh(v);
      break;
    case UnaryOp::Sigmoid:
      for (auto& v : out.data) v = sigmoid_of(v);
      break;
    case UnaryOp::Exp:
      for (auto& v : out.data) v = std::exp(v);
      break;
    case UnaryOp::Log:
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(out[i] > T(0))) {
          throw DomainError("log of non-positive value " + std::to_string(static_cast<double>(out[i])) +
                            " at index " + std::to_string(i));
        }
        out[i] = std::log(out[i]);
      }
      break;
  }
  return push(std::move(out), needs(x), [op, x](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    const auto& y = g.value(Var{self});
    const auto& xv = g.value(x);
    auto& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < up.size(); ++i) {
      T d = 0;
      switch (op) {
        case UnaryOp::Tanh: d = T(1) - y[i] * y[i]; break;
        case UnaryOp::Sigmoid: d = y[i] * (T(1) - y[i]); break;
        case UnaryOp::Exp: d = y[i]; break;
        case UnaryOp::Log: d = T(1) / xv[i]; break;
      }
      dx[i] += up[i] * d;
    }
  });
}

template <typename T>
Var Graph<T>::softmax(Var v, std::span<const std::uint8_t> mask) {
  check(v);
  const auto& in = value(v);
  const std::size_t n = in.size();
  if (in.shape.rows != 1 && in.shape.cols != 1) throw ShapeError("softmax expects a vector, got " + in.shape.str());
  if (!mask.empty() && mask.size() != n) throw ShapeError("softmax mask length differs from input");
  auto open = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };

  T peak = -std::numeric_limits<T>::infinity();
  bool any = false;
  for (std::size_t i = 0; i < n; ++i) {
    if (!open(i)) continue;
    any = true;
    peak = std::max(peak, in[i]);
  }
  if (!any) throw ContractError("softmax: every position is masked");

  Tensor<T> out(in.shape);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!open(i)) continue;
    out[i] = std::exp(in[i] - peak);
    total += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= total;

  return push(std::move(out), needs(v), [v](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    const auto& y = g.value(Var{self});
    T dot = 0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += y[i] * up[i];
    auto& dv = g.grad_buffer(v);
    for (std::size_t i = 0; i < y.size(); ++i) dv[i] += y[i] * (up[i] - dot);
  });
}

// ---------------------------------------------------------------- structural

template <typename T>
Var Graph<T>::concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  if (axis != 0 && axis != 1) throw ContractError("concat axis must be 0 or 1");
  for (Var p : parts) check(p);
  const Shape first = value(parts[0]).shape;
  Shape s = first;
  if (axis == 0) {
    s.rows = 0;
    for (Var p : parts) {
      const Shape ps = value(p).shape;
      if (ps.cols != first.cols) throw ShapeError("concat axis 0: " + ps.str() + " vs " + first.str());
      s.rows += ps.rows;
    }
  } else {
    s.cols = 0;
    for (Var p : parts) {
      const Shape ps = value(p).shape;
      if (ps.rows != first.rows) throw ShapeError("concat axis 1: " + ps.str() + " vs " + first.str());
      s.cols += ps.cols;
    }
  }

  Tensor<T> out(s);
  if (axis == 0) {
    auto it = out.data.begin();
    for (Var p : parts) it = std::copy(value(p).data.begin(), value(p).data.end(), it);
  } else {
    std::size_t col = 0;
    for (Var p : parts) {
      const auto& pv = value(p);
      for (std::size_t i = 0; i < s.rows; ++i)
        for (std::size_t j = 0; j < pv.shape.cols; ++j) out(i, col + j) = pv(i, j);
      col += pv.shape.cols;
    }
  }

  bool rg = false;
  for (Var p : parts) rg = rg || needs(p);
  std::vector<Var> ps(parts.begin(), parts.end());
  return push(std::move(out), rg, [ps = std::move(ps), axis](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    std::size_t offset = 0;
    for (Var p : ps) {
      const Shape pshape = g.value(p).shape;
      if (g.needs(p)) {
        auto& dp = g.grad_buffer(p);
        if (axis == 0) {
          for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += up[offset + i];
        } else {
          for (std::size_t i = 0; i < pshape.rows; ++i)
            for (std::size_t j = 0; j < pshape.cols; ++j) dp(i, j) += up(i, offset + j);
        }
      }
      offset += axis == 0 ? pshape.size() : pshape.cols;
    }
  });
}

template <typename T>
Var Graph<T>::gather_rows(Var table, std::span<const std::size_t> ids) {
  check(table);
  const auto& e = value(table);
  const std::size_t d = e.shape.cols;
  Tensor<T> out(Shape{ids.size(), d});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= e.shape.rows) {
      throw IndexError("gather_rows: id " + std::to_string(ids[r]) + " out of range for " + e.shape.str());
    }
    std::copy_n(e.data.begin() + static_cast<std::ptrdiff_t>(ids[r] * d), d,
                out.data.begin() + static_cast<std::ptrdiff_t>(r * d));
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return push(std::move(out), needs(table), [table, idv = std::move(idv), d](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    auto& de = g.grad_buffer(table);
    for (std::size_t r = 0; r < idv.size(); ++r)
      for (std::size_t i = 0; i < d; ++i) de[idv[r] * d + i] += up[r * d + i];
  });
}

template <typename T>
Var Graph<T>::transpose(Var x) {
  check(x);
  const auto& xv = value(x);
  const Shape s = xv.shape;
  Tensor<T> out(Shape{s.cols, s.rows});
  for (std::size_t i = 0; i < s.rows; ++i)
    for (std::size_t j = 0; j < s.cols; ++j) out(j, i) = xv(i, j);
  return push(std::move(out), needs(x), [x, s](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    auto& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < s.rows; ++i)
      for (std::size_t j = 0; j < s.cols; ++j) dx(i, j) += up(j, i);
  });
}

template <typename T>
Var Graph<T>::sum(Var x) {
  check(x);
  T total = 0;
  for (T v : value(x).data) total += v;
  return push(Tensor<T>::scalar(total), needs(x), [x](Graph& g, std::uint32_t self) {
    const T up = g.upstream(self)[0];
    for (auto& d : g.grad_buffer(x).data) d += up;
  });
}

template <typename T>
Var Graph<T>::pick(Var x, std::size_t index) {
  check(x);
  const auto& xv = value(x);
  if (index >= xv.size()) throw IndexError("pick: index " + std::to_string(index) + " out of range for " + xv.shape.str());
  return push(Tensor<T>::scalar(xv[index]), needs(x), [x, index](Graph& g, std::uint32_t self) {
    g.grad_buffer(x)[index] += g.upstream(self)[0];
  });
}

template <typename T>
Var Graph<T>::nll(Var probs, std::size_t target) {
  check(probs);
  const auto& pv = value(probs);
  if (target >= pv.size()) throw IndexError("nll: target " + std::to_string(target) + " out of range for " + pv.shape.str());
  T total = 0;
  for (T p : pv.data) total += p;
  const double tol = std::max(1e-5, 4.0 * static_cast<double>(pv.size()) *
                                        static_cast<double>(std::numeric_limits<T>::epsilon()));
  if (std::abs(static_cast<double>(total) - 1.0) > tol) {
    throw ContractError("nll: probabilities sum to " + std::to_string(static_cast<double>(total)));
  }
  const T p = pv[target];
  const bool clamped = !(p >= static_cast<T>(kNllFloor));
  if (clamped) ++nll_floor_hits_;
  const T loss = -std::log(clamped ? static_cast<T>(kNllFloor) : p);
  return push(Tensor<T>::scalar(loss), needs(probs) && !clamped, [probs, target](Graph& g, std::uint32_t self) {
    const T up = g.upstream(self)[0];
    g.grad_buffer(probs)[target] -= up / g.value(probs)[target];
  });
}

template <typename T>
Var Graph<T>::scatter_add(Var x, std::span<const std::size_t> index, std::size_t size) {
  check(x);
  const auto& xv = value(x);
  if (index.size() != xv.size()) throw ShapeError("scatter_add: index length differs from input size");
  Tensor<T> out(Shape{size, 1});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= size) throw IndexError("scatter_add: target " + std::to_string(index[i]) + " >= " + std::to_string(size));
    out[index[i]] += xv[i];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return push(std::move(out), needs(x), [x, idx = std::move(idx)](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    auto& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < idx.size(); ++i) dx[i] += up[idx[i]];
  });
}

template <typename T>
Var Graph<T>::pad_rows(Var x, std::size_t rows) {
  check(x);
  const auto& xv = value(x);
  if (xv.shape.cols != 1 || rows < xv.shape.rows) {
    throw ShapeError("pad_rows: cannot pad " + xv.shape.str() + " to " + std::to_string(rows) + " rows");
  }
  Tensor<T> out(Shape{rows, 1});
  std::copy(xv.data.begin(), xv.data.end(), out.data.begin());
  return push(std::move(out), needs(x), [x](Graph& g, std::uint32_t self) {
    const auto& up = g.upstream(self);
    auto& dx = g.grad_buffer(x);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += up[i];
  });
}

template <typename T>
Var Graph<T>::gru_cell(Var wx, Var wh, Var bias, Var x, Var h) {
  for (Var v : {wx, wh, bias, x, h}) check(v);
  const auto& wxv = value(wx);
  const auto& whv = value(wh);
  const auto& hv = value(h);
  const auto& xv = value(x);
  const std::size_t hd = hv.shape.rows;
  const std::size_t in = xv.shape.rows;
  if (hv.shape.cols != 1 || xv.shape.cols != 1) throw ShapeError("gru_cell: x and h must be column vectors");
  if (!(wxv.shape == Shape{3 * hd, in})) throw ShapeError("gru_cell: Wx " + wxv.shape.str() + " for input " + xv.shape.str());
  if (!(whv.shape == Shape{3 * hd, hd})) throw ShapeError("gru_cell: Wh " + whv.shape.str() + " for state " + hv.shape.str());
  if (!(value(bias).shape == Shape{3 * hd, 1})) throw ShapeError("gru_cell: bias " + value(bias).shape.str());

  // ax = Wx x + b over all three gates; uh = Wh_{r,z} h.
  std::vector<T> ax(value(bias).data);
  kp::gemm_nn<T>(3 * hd, 1, in, wxv.span(), xv.span(), ax);
  std::vector<T> uh(2 * hd, T(0));
  kp::gemm_nn<T>(2 * hd, 1, hd, whv.span().first(2 * hd * hd), hv.span(), uh);

  std::vector<T> r(hd), z(hd), s(hd), n(hd, T(0));
  for (std::size_t i = 0; i < hd; ++i) {
    r[i] = sigmoid_of(ax[i] + uh[i]);
    z[i] = sigmoid_of(ax[hd + i] + uh[hd + i]);
    s[i] = r[i] * hv[i];
  }
  kp::gemm_nn<T>(hd, 1, hd, whv.span().subspan(2 * hd * hd), std::span<const T>(s), n);
  Tensor<T> out(Shape{hd, 1});
  for (std::size_t i = 0; i < hd; ++i) {
    n[i] = std::tanh(ax[2 * hd + i] + n[i]);
    out[i] = (T(1) - z[i]) * n[i] + z[i] * hv[i];
  }

  const bool rg = any_needs({wx, wh, bias, x, h});
  return push(std::move(out), rg,
              [wx, wh, bias, x, h, hd, in, r = std::move(r), z = std::move(z), s = std::move(s),
               n = std::move(n)](Graph& g, std::uint32_t self) {
                const auto& up = g.upstream(self);
                const auto& hv = g.value(h);
                const auto& whv = g.value(wh);
                std::vector<T> dax(3 * hd), dh(hd);
                for (std::size_t i = 0; i < hd; ++i) {
                  const T dn = up[i] * (T(1) - z[i]);
                  const T dz = up[i] * (hv[i] - n[i]);
                  dh[i] = up[i] * z[i];
                  dax[2 * hd + i] = dn * (T(1) - n[i] * n[i]);
                  dax[hd + i] = dz * z[i] * (T(1) - z[i]);
                }
                const std::span<const T> dan(dax.data() + 2 * hd, hd);
                // through s = r * h
                std::vector<T> ds(hd, T(0));
                kp::gemm_tn<T>(hd, 1, hd, whv.span().subspan(2 * hd * hd), dan, ds);
                for (std::size_t i = 0; i < hd; ++i) {
                  const T dr = ds[i] * hv[i];
                  dh[i] += ds[i] * r[i];
                  dax[i] = dr * r[i] * (T(1) - r[i]);
                }
                const std::span<const T> drz(dax.data(), 2 * hd);
                if (g.needs(wh)) {
                  auto dwh = g.grad_buffer(wh).span();
                  kp::gemm_nt<T>(2 * hd, hd, 1, drz, hv.span(), dwh.first(2 * hd * hd));
                  kp::gemm_nt<T>(hd, hd, 1, dan, std::span<const T>(s), dwh.subspan(2 * hd * hd));
                }
                if (g.needs(h)) {
                  kp::gemm_tn<T>(hd, 1, 2 * hd, whv.span().first(2 * hd * hd), drz, dh);
                  kp::axpy<T>(T(1), std::span<const T>(dh), g.grad_buffer(h).span());
                }
                if (g.needs(wx)) kp::gemm_nt<T>(3 * hd, in, 1, std::span<const T>(dax), g.value(x).span(), g.grad_buffer(wx).span());
                if (g.needs(x)) kp::gemm_tn<T>(in, 1, 3 * hd, g.value(wx).span(), std::span<const T>(dax), g.grad_buffer(x).span());
                if (g.needs(bias)) kp::axpy<T>(T(1), std::span<const T>(dax), g.grad_buffer(bias).span());
              });
}

// ---------------------------------------------------------------- backward

template <typename T>
void Graph<T>::backward(Var loss) {
  check(loss);
  if (!recording_) throw ContractError("backward on a graph that does not record");
  if (backward_done_) throw ContractError("backward already ran on this graph");
  if (value(loss).size() != 1) throw ContractError("backward needs a scalar loss, got " + value(loss).shape.str());
  backward_done_ = true;
  if (!nodes_[loss.id].requires_grad) return;
  grad_buffer(loss)[0] = T(1);
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.back) continue;
    n.back(*this, i);
  }
}

template class Graph<float>;
template class Graph<double>;

}  // namespace opatt
