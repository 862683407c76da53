#pragma once

// Minimal dense reverse-mode automatic differentiation.
//
// A Graph records every operation of one forward pass as a node holding its
// value and a backward closure. Graph::backward walks the nodes in reverse
// creation order (a valid reverse topological order) and accumulates
// gradients. Parameters live outside the graph in a ParameterStore; a graph
// binds each parameter once and writes its gradient back after backward.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "synfault/error.hpp"

namespace synfault::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

/// Row-major dense array.
template <std::floating_point T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel(shape)) throw ShapeError("tensor data length does not match shape " + shape_str(shape));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
};

template <std::floating_point T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  std::vector<T> grad;
};

/// Owns named parameters at stable addresses.
template <std::floating_point T>
class ParameterStore {
 public:
  Parameter<T>& add(std::string name, Shape shape) {
    if (find(name)) throw ParameterError("duplicate parameter name " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = std::move(name);
    p->value = Tensor<T>(std::move(shape));
    p->grad.assign(p->value.size(), T(0));
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>* find(const std::string& name) {
    for (auto& p : params_) if (p->name == name) return p.get();
    return nullptr;
  }
  const Parameter<T>* find(const std::string& name) const {
    for (const auto& p : params_) if (p->name == name) return p.get();
    return nullptr;
  }

  Parameter<T>& at(const std::string& name) {
    if (auto* p = find(name)) return *p;
    throw ParameterError("no parameter named " + name);
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), T(0));
  }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  /// Total number of scalar weights, optionally restricted to a name prefix.
  std::size_t count(const std::string& prefix = "") const {
    std::size_t n = 0;
    for (const auto& p : params_) if (p->name.starts_with(prefix)) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

template <std::floating_point T>
class Graph;

/// Handle to a node of a Graph.
template <std::floating_point T>
struct Var {
  Graph<T>* graph = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const { return graph->value(*this); }
  const Shape& shape() const { return value().shape; }
};

template <std::floating_point T>
class Graph {
 public:
  using Backward = std::function<void(Graph&, std::size_t self)>;

  Graph() = default;
  /// When bound to a store, backward zeroes every gradient in the store before
  /// writing the reached ones, so unreachable parameters end up with zero.
  explicit Graph(ParameterStore<T>& store) : store_(&store) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), false, nullptr, {}); }

  Var<T> param(Parameter<T>& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    Var<T> v = push(p.value, true, &p, {});
    param_nodes_.emplace(&p, v.id);
    return v;
  }

  /// Records an operation. The node requires a gradient iff any parent does.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, Backward backward, const char* op = "") {
    bool needs = false;
    for (const Var<T>& p : parents) {
      check_owner(p);
      needs = needs || nodes_[p.id].requires_grad;
    }
    Var<T> v = push(std::move(value), needs, nullptr, needs ? std::move(backward) : Backward{});
    nodes_.back().op = op;
    return v;
  }

  /// Ids of nodes recorded under the given op tag, in creation order.
  std::vector<std::size_t> nodes_tagged(std::string_view op) const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < nodes_.size(); ++i) if (op == nodes_[i].op) ids.push_back(i);
    return ids;
  }

  const Tensor<T>& value(Var<T> v) const {
    check_owner(v);
    return nodes_[v.id].value;
  }

  const Tensor<T>& node_value(std::size_t id) const { return nodes_.at(id).value; }

  bool requires_grad(Var<T> v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient accumulated into node `id`; zero-filled on first access.
  std::vector<T>& grad_buffer(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
    return n.grad;
  }
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }

  /// Gradient of node v after backward (empty if v was not reached).
  const std::vector<T>& grad(Var<T> v) const { return nodes_.at(v.id).grad; }

  std::size_t node_count() const { return nodes_.size(); }

  void backward(Var<T> loss) {
    if (consumed_) throw StateError("backward called twice on the same forward pass");
    if (nodes_.empty()) throw StateError("backward called before any forward pass");
    check_owner(loss);
    if (nodes_[loss.id].value.size() != 1) throw ShapeError("backward requires a scalar loss");
    consumed_ = true;
    grad_buffer(loss.id)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backward && !n.grad.empty()) n.backward(*this, i);
    }
    if (store_) store_->zero_grad();
    for (auto& [p, id] : param_nodes_) {
      const Node& n = nodes_[id];
      if (n.grad.empty()) {
        std::fill(p->grad.begin(), p->grad.end(), T(0));
      } else {
        p->grad = n.grad;
      }
    }
  }

  bool consumed() const { return consumed_; }

 private:
  struct Node {
    Tensor<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    Backward backward;
    const char* op = "";
  };

  Var<T> push(Tensor<T> value, bool requires_grad, Parameter<T>* p, Backward backward) {
    if (consumed_) throw StateError("graph already consumed by backward; start a new forward pass");
    nodes_.push_back(Node{std::move(value), {}, requires_grad, p, std::move(backward)});
    return {this, nodes_.size() - 1};
  }

  void check_owner(Var<T> v) const {
    if (v.graph != this || v.id >= nodes_.size()) throw StateError("variable does not belong to this graph");
  }

  std::vector<Node> nodes_;
  std::unordered_map<Parameter<T>*, std::size_t> param_nodes_;
  ParameterStore<T>* store_ = nullptr;
  bool consumed_ = false;
};

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
void require_rank(const Tensor<T>& t, std::size_t r, const char* op) {
  if (t.rank() != r) throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_str(t.shape));
}

template <class T>
void add_into(std::vector<T>& dst, const T* src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// Eigen's reductions peel to the first aligned element, so their rounding
// depends on where the heap put the buffer. These fixed-lane versions sum in
// the same order for any address and still vectorize.
inline constexpr std::size_t kLanes = 16;

template <class T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc[kLanes] = {};
  const std::size_t full = n - n % kLanes;
  for (std::size_t i = 0; i < full; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
  T s = 0;
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  for (std::size_t i = full; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <class T>
T total(const T* a, std::size_t n) {
  T acc[kLanes] = {};
  const std::size_t full = n - n % kLanes;
  for (std::size_t i = 0; i < full; i += kLanes)
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l];
  T s = 0;
  for (std::size_t l = 0; l < kLanes; ++l) s += acc[l];
  for (std::size_t i = full; i < n; ++i) s += a[i];
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction ops

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return a.graph->record(std::move(out), {a, b}, [a, b](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    for (Var<T> p : {a, b}) {
      if (!g.requires_grad(p)) continue;
      auto& gp = g.grad_buffer(p.id);
      for (std::size_t i = 0; i < gy.size(); ++i) gp[i] += gy[i];
    }
  });
}

template <class T>
Var<T> mul(Var<T> a, Var<T> b) {
  if (a.shape() != b.shape()) throw ShapeError("mul: shape mismatch");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return a.graph->record(std::move(out), {a, b}, [a, b](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    if (g.requires_grad(a)) {
      auto& ga = g.grad_buffer(a.id);
      const auto& bv = b.value().data;
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * bv[i];
    }
    if (g.requires_grad(b)) {
      auto& gb = g.grad_buffer(b.id);
      const auto& av = a.value().data;
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * av[i];
    }
  });
}

template <class T>
Var<T> scale(Var<T> x, T factor) {
  Tensor<T> out = x.value();
  for (T& v : out.data) v *= factor;
  return x.graph->record(std::move(out), {x}, [x, factor](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += factor * gy[i];
  });
}

/// Identity forward; multiplies the incoming gradient by `factor` on the way
/// back. factor = -lambda realizes gradient reversal.
template <class T>
Var<T> grad_scale(Var<T> x, T factor) {
  return x.graph->record(x.value(), {x}, [x, factor](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += factor * gy[i];
  });
}

/// Copy of x that blocks gradient flow.
template <class T>
Var<T> detach(Var<T> x) {
  return x.graph->constant(x.value());
}

template <class T>
Var<T> sum(Var<T> x) {
  T s = 0;
  for (T v : x.value().data) s += v;
  return x.graph->record(Tensor<T>({1}, {s}), {x}, [x](Graph<T>& g, std::size_t self) {
    const T gy = g.grad_buffer(self)[0];
    auto& gx = g.grad_buffer(x.id);
    for (T& v : gx) v += gy;
  });
}

template <class T>
Var<T> mean(Var<T> x) {
  return scale(sum(x), T(1) / static_cast<T>(x.value().size()));
}

template <class T>
Var<T> relu(Var<T> x) {
  Tensor<T> out = x.value();
  for (T& v : out.data) v = v > T(0) ? v : T(0);
  return x.graph->record(std::move(out), {x}, [x](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    const auto& xv = x.value().data;
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) if (xv[i] > T(0)) gx[i] += gy[i];
  }, "relu");
}

/// Inverted dropout: in training, zeroes each element with probability `rate`
/// and scales survivors by 1 / (1 - rate). Identity at inference.
template <class T, class R>
Var<T> dropout(Var<T> x, double rate, bool training, R& rng) {
  static_assert(R::min() == 0 && R::max() == std::numeric_limits<std::uint64_t>::max(), "dropout needs a 64-bit engine");
  if (!(rate >= 0.0 && rate < 1.0)) throw ParameterError("dropout rate must lie in [0, 1)");
  if (!training || rate == 0.0) return x;
  const auto n = x.value().size();
  std::vector<T> mask(n);
  // One engine draw seeds a SplitMix64 counter stream; element i is kept iff
  // its 32-bit half-word falls below keep * 2^32.
  const auto threshold = static_cast<std::uint32_t>(std::ldexp(1.0 - rate, 32));
  const T s = static_cast<T>(1.0 / (1.0 - rate));
  const std::uint64_t base = rng();
  const std::size_t pairs = n / 2;
  auto word = [base](std::size_t h) {
    std::uint64_t z = base + (h + 1) * 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  for (std::size_t h = 0; h < pairs; ++h) {
    const std::uint64_t z = word(h);
    mask[2 * h] = static_cast<std::uint32_t>(z) < threshold ? s : T(0);
    mask[2 * h + 1] = static_cast<std::uint32_t>(z >> 32) < threshold ? s : T(0);
  }
  if (n % 2) mask[n - 1] = static_cast<std::uint32_t>(word(pairs)) < threshold ? s : T(0);
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < n; ++i) out[i] *= mask[i];
  return x.graph->record(std::move(out), {x}, [x, mask = std::move(mask)](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * mask[i];
  });
}

/// Same data, new shape (element count must match).
template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
  if (numel(shape) != x.value().size()) throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  return x.graph->record(Tensor<T>(std::move(shape), x.value().data), {x}, [x](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    detail::add_into(g.grad_buffer(x.id), gy.data());
  });
}

/// [B, ...] -> [B, prod(...)].
template <class T>
Var<T> flatten(Var<T> x) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("flatten: scalar input");
  return reshape(x, {s[0], s[0] ? x.value().size() / s[0] : 0});
}

/// Stacks a [Ba, ...] and b [Bb, ...] along the first axis.
template <class T>
Var<T> concat_rows(Var<T> a, Var<T> b) {
  Shape sa = a.shape(), sb = b.shape();
  if (sa.size() != sb.size() || sa.empty() || !std::equal(sa.begin() + 1, sa.end(), sb.begin() + 1)) {
    throw ShapeError("concat_rows: trailing shapes differ");
  }
  Shape so = sa;
  so[0] += sb[0];
  std::vector<T> d = a.value().data;
  d.insert(d.end(), b.value().data.begin(), b.value().data.end());
  const std::size_t na = a.value().size();
  return a.graph->record(Tensor<T>(so, std::move(d)), {a, b}, [a, b, na](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    if (g.requires_grad(a)) detail::add_into(g.grad_buffer(a.id), gy.data());
    if (g.requires_grad(b)) detail::add_into(g.grad_buffer(b.id), gy.data() + na);
  });
}

// ---------------------------------------------------------------------------
// Layers

/// y = x W^T + b with x [B, in], W [out, in], b [out].
template <class T>
Var<T> dense(Var<T> x, Var<T> w, Var<T> b) {
  detail::require_rank(x.value(), 2, "dense");
  detail::require_rank(w.value(), 2, "dense weight");
  const std::size_t batch = x.shape()[0], in = x.shape()[1], out = w.shape()[0];
  if (w.shape()[1] != in || b.value().size() != out) {
    throw ShapeError("dense: input " + shape_str(x.shape()) + " incompatible with weight " + shape_str(w.shape()));
  }
  using M = detail::RowMat<T>;
  Tensor<T> y({batch, out});
  {
    Eigen::Map<const M> X(x.value().data.data(), batch, in);
    Eigen::Map<const M> W(w.value().data.data(), out, in);
    Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bias(b.value().data.data(), out);
    Eigen::Map<M> Y(y.data.data(), batch, out);
    Y.noalias() = X * W.transpose();
    Y.rowwise() += bias;
  }
  return x.graph->record(std::move(y), {x, w, b}, [x, w, b, batch, in, out](Graph<T>& g, std::size_t self) {
    Eigen::Map<const M> GY(g.grad_buffer(self).data(), batch, out);
    if (g.requires_grad(x)) {
      Eigen::Map<const M> W(w.value().data.data(), out, in);
      M tmp = GY * W;
      detail::add_into(g.grad_buffer(x.id), tmp.data());
    }
    if (g.requires_grad(w)) {
      Eigen::Map<const M> X(x.value().data.data(), batch, in);
      M tmp = GY.transpose() * X;
      detail::add_into(g.grad_buffer(w.id), tmp.data());
    }
    if (g.requires_grad(b)) {
      auto& gb = g.grad_buffer(b.id);
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t c = 0; c < out; ++c) gb[c] += GY(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  });
}

/// Valid (unpadded) stride-1 cross-correlation.
/// x [B, Cin, L], w [Cout, Cin, K], b [Cout] -> [B, Cout, L - K + 1].
template <class T>
Var<T> conv1d(Var<T> x, Var<T> w, Var<T> b) {
  detail::require_rank(x.value(), 3, "conv1d");
  detail::require_rank(w.value(), 3, "conv1d weight");
  const std::size_t batch = x.shape()[0], cin = x.shape()[1], len = x.shape()[2];
  const std::size_t cout = w.shape()[0], k = w.shape()[2];
  if (w.shape()[1] != cin || b.value().size() != cout) throw ShapeError("conv1d: channel mismatch");
  if (len < k) throw ShapeError("conv1d: input shorter than kernel");
  const std::size_t lout = len - k + 1;
  Tensor<T> y({batch, cout, lout});
  const T* xd = x.value().data.data();
  const T* wd = w.value().data.data();
  const T* bd = b.value().data.data();
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  const auto lo = static_cast<Eigen::Index>(lout);
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t co = 0; co < cout; ++co) {
      Eigen::Map<Vec> yr(y.data.data() + (n * cout + co) * lout, lo);
      yr.setConstant(bd[co]);
      for (std::size_t ci = 0; ci < cin; ++ci) {
        const T* xr = xd + (n * cin + ci) * len;
        for (std::size_t j = 0; j < k; ++j) yr += wd[(co * cin + ci) * k + j] * Eigen::Map<const Vec>(xr + j, lo);
      }
    }
  }
  return x.graph->record(std::move(y), {x, w, b}, [=](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    const T* xd2 = x.value().data.data();
    const T* wd2 = w.value().data.data();
    const bool gx_on = g.requires_grad(x), gw_on = g.requires_grad(w), gb_on = g.requires_grad(b);
    T* gx = gx_on ? g.grad_buffer(x.id).data() : nullptr;
    T* gw = gw_on ? g.grad_buffer(w.id).data() : nullptr;
    T* gb = gb_on ? g.grad_buffer(b.id).data() : nullptr;
    using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
    const auto lo = static_cast<Eigen::Index>(lout);
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t co = 0; co < cout; ++co) {
        const T* gr = gy.data() + (n * cout + co) * lout;
        Eigen::Map<const Vec> grv(gr, lo);
        if (gb) gb[co] += detail::total(gr, lout);
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const T* xr = xd2 + (n * cin + ci) * len;
          for (std::size_t j = 0; j < k; ++j) {
            const std::size_t wi = (co * cin + ci) * k + j;
            if (gw) gw[wi] += detail::dot(gr, xr + j, lout);
            if (gx) Eigen::Map<Vec>(gx + (n * cin + ci) * len + j, lo) += wd2[wi] * grv;
          }
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Probabilities and losses

/// Row-wise softmax over the last axis of a [B, C] tensor (max-subtracted).
template <class T>
Var<T> softmax(Var<T> x) {
  detail::require_rank(x.value(), 2, "softmax");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  Tensor<T> y = x.value();
  for (std::size_t r = 0; r < rows; ++r) {
    T* row = y.data.data() + r * cols;
    const T mx = *std::max_element(row, row + cols);
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) z += row[c] = std::exp(row[c] - mx);
    for (std::size_t c = 0; c < cols; ++c) row[c] /= z;
  }
  Tensor<T> yc = y;
  return x.graph->record(std::move(y), {x}, [x, yc = std::move(yc), rows, cols](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += gy[r * cols + c] * yc[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) gx[r * cols + c] += yc[r * cols + c] * (gy[r * cols + c] - dot);
    }
  });
}

/// Mean negative log-likelihood of `labels` under row probabilities p [B, C].
template <class T>
Var<T> cross_entropy(Var<T> p, std::span<const int> labels) {
  detail::require_rank(p.value(), 2, "cross_entropy");
  const std::size_t rows = p.shape()[0], cols = p.shape()[1];
  if (labels.size() != rows) throw ShapeError("cross_entropy: label count differs from batch size");
  std::vector<int> lab(labels.begin(), labels.end());
  T loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (lab[r] < 0 || static_cast<std::size_t>(lab[r]) >= cols) throw ParameterError("cross_entropy: label out of range");
    loss -= std::log(std::max(p.value()[r * cols + static_cast<std::size_t>(lab[r])], std::numeric_limits<T>::min()));
  }
  loss /= static_cast<T>(rows);
  return p.graph->record(Tensor<T>({1}, {loss}), {p}, [p, lab = std::move(lab), rows, cols](Graph<T>& g, std::size_t self) {
    const T gy = g.grad_buffer(self)[0];
    auto& gp = g.grad_buffer(p.id);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = r * cols + static_cast<std::size_t>(lab[r]);
      gp[i] -= gy / (static_cast<T>(rows) * std::max(p.value()[i], std::numeric_limits<T>::min()));
    }
  });
}

/// Fused softmax + mean cross-entropy on logits [B, C] (log-sum-exp form).
template <class T>
Var<T> softmax_cross_entropy(Var<T> logits, std::span<const int> labels) {
  detail::require_rank(logits.value(), 2, "softmax_cross_entropy");
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  if (labels.size() != rows) throw ShapeError("softmax_cross_entropy: label count differs from batch size");
  std::vector<int> lab(labels.begin(), labels.end());
  std::vector<T> prob(rows * cols);
  T loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (lab[r] < 0 || static_cast<std::size_t>(lab[r]) >= cols) throw ParameterError("softmax_cross_entropy: label out of range");
    const T* row = logits.value().data.data() + r * cols;
    const T mx = *std::max_element(row, row + cols);
    T z = 0;
    for (std::size_t c = 0; c < cols; ++c) z += prob[r * cols + c] = std::exp(row[c] - mx);
    for (std::size_t c = 0; c < cols; ++c) prob[r * cols + c] /= z;
    loss += std::log(z) + mx - row[lab[r]];
  }
  loss /= static_cast<T>(rows);
  return logits.graph->record(Tensor<T>({1}, {loss}), {logits},
                              [logits, lab = std::move(lab), prob = std::move(prob), rows, cols](Graph<T>& g, std::size_t self) {
                                const T gy = g.grad_buffer(self)[0] / static_cast<T>(rows);
                                auto& gx = g.grad_buffer(logits.id);
                                for (std::size_t r = 0; r < rows; ++r) {
                                  for (std::size_t c = 0; c < cols; ++c) {
                                    const T onehot = static_cast<int>(c) == lab[r] ? T(1) : T(0);
                                    gx[r * cols + c] += gy * (prob[r * cols + c] - onehot);
                                  }
                                }
                              });
}

// ---------------------------------------------------------------------------
// Conditioning and mixing

/// Per-row outer product e_b (x) y_b flattened feature-major: out[b, i*K + k] =
/// e[b, i] * y[b, k]. Differentiable in both arguments.
template <class T>
Var<T> outer(Var<T> e, Var<T> y) {
  detail::require_rank(e.value(), 2, "outer");
  detail::require_rank(y.value(), 2, "outer");
  const std::size_t rows = e.shape()[0], f = e.shape()[1], k = y.shape()[1];
  if (y.shape()[0] != rows) throw ShapeError("outer: batch sizes differ");
  Tensor<T> z({rows, f * k});
  const auto& ev = e.value().data;
  const auto& yv = y.value().data;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < f; ++i)
      for (std::size_t c = 0; c < k; ++c) z[(r * f + i) * k + c] = ev[r * f + i] * yv[r * k + c];
  return e.graph->record(std::move(z), {e, y}, [e, y, rows, f, k](Graph<T>& g, std::size_t self) {
    const auto& gz = g.grad_buffer(self);
    const auto& ev2 = e.value().data;
    const auto& yv2 = y.value().data;
    if (g.requires_grad(e)) {
      auto& ge = g.grad_buffer(e.id);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < f; ++i) {
          T s = 0;
          for (std::size_t c = 0; c < k; ++c) s += gz[(r * f + i) * k + c] * yv2[r * k + c];
          ge[r * f + i] += s;
        }
    }
    if (g.requires_grad(y)) {
      auto& gyb = g.grad_buffer(y.id);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < k; ++c) {
          T s = 0;
          for (std::size_t i = 0; i < f; ++i) s += gz[(r * f + i) * k + c] * ev2[r * f + i];
          gyb[r * k + c] += s;
        }
    }
  });
}

/// out[b] = lambda * x[b] + (1 - lambda) * x[perm[b]] for a [B, F] tensor.
template <class T>
Var<T> mix_rows(Var<T> x, std::span<const std::size_t> perm, T lambda) {
  detail::require_rank(x.value(), 2, "mix_rows");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (perm.size() != rows) throw ShapeError("mix_rows: permutation length differs from batch size");
  std::vector<std::size_t> p(perm.begin(), perm.end());
  std::vector<bool> seen(rows, false);
  for (std::size_t v : p) {
    if (v >= rows || seen[v]) throw ParameterError("mix_rows: index list is not a permutation");
    seen[v] = true;
  }
  Tensor<T> out({rows, cols});
  const auto& xv = x.value().data;
  const T mu = T(1) - lambda;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = lambda * xv[r * cols + c] + mu * xv[p[r] * cols + c];
  return x.graph->record(std::move(out), {x}, [x, p = std::move(p), lambda, mu, rows, cols](Graph<T>& g, std::size_t self) {
    const auto& gy = g.grad_buffer(self);
    auto& gx = g.grad_buffer(x.id);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) {
        gx[r * cols + c] += lambda * gy[r * cols + c];
        gx[p[r] * cols + c] += mu * gy[r * cols + c];
      }
  });
}

}  // namespace synfault::nn
